//! Policy-gradient training: episode execution against task instances,
//! exact episode gradients, Adam, the training loop, and checkpoint io.

pub mod adam;
pub mod backward;
pub mod checkpoint;
pub mod train;

pub use adam::AdamState;
pub use backward::episode_backward;
pub use checkpoint::{load_checkpoint, save_checkpoint, LoadedCheckpoint};
pub use train::{train, BaselineConfig, DecayKind, TrainConfig, TrainOutput};

use ndarray::Array1;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{Binding, DatasetVocab, TaskInstance};
use crate::error::{CopathError, Result};
use crate::lexicon::{embed_utterance, select_query_entity, WordVectors};
use crate::model::{AblationMode, ModelParams};
use crate::policy::{rollout_episode, serialize_path, AgentInputs, DecodeMode, EpisodeTrace};
use crate::reward::{compute_reward, RougeVariant};

/// Embedding-row binding plus the utterance embedding for one instance.
/// Both are fixed for the life of a run, so they are computed once up
/// front rather than per episode.
#[derive(Debug, Clone)]
pub struct PreparedInstance {
    pub binding: Binding,
    pub utterance: Array1<f64>,
}

pub fn prepare_instance(
    instance: &TaskInstance,
    vocab: &DatasetVocab,
    vectors: &WordVectors,
) -> Result<PreparedInstance> {
    Ok(PreparedInstance {
        binding: vocab.bind(instance)?,
        utterance: embed_utterance(&instance.utterance, vectors)?,
    })
}

pub fn prepare_instances(
    instances: &[TaskInstance],
    vocab: &DatasetVocab,
    vectors: &WordVectors,
) -> Result<Vec<PreparedInstance>> {
    instances
        .iter()
        .map(|inst| prepare_instance(inst, vocab, vectors))
        .collect()
}

/// Each active side starts at the entity whose embedding best matches the
/// utterance embedding; disabled sides yield `None`.
pub fn episode_starts(
    params: &ModelParams,
    prep: &PreparedInstance,
    ablation: AblationMode,
) -> Result<(Option<usize>, Option<usize>)> {
    let start_v = if ablation.uses_video() {
        Some(select_query_entity(
            &params.emb.ent_v,
            &prep.binding.ent_v,
            &prep.utterance,
        )?)
    } else {
        None
    };
    let start_u = if ablation.uses_context() {
        Some(select_query_entity(
            &params.emb.ent_u,
            &prep.binding.ent_u,
            &prep.utterance,
        )?)
    } else {
        None
    };
    Ok((start_v, start_u))
}

/// Build the per-side rollout inputs for an instance. `None` starts give
/// `None` inputs, matching a disabled side.
pub fn side_inputs<'a>(
    instance: &'a TaskInstance,
    prep: &'a PreparedInstance,
    start_v: Option<usize>,
    start_u: Option<usize>,
) -> (Option<AgentInputs<'a>>, Option<AgentInputs<'a>>) {
    let video = start_v.map(|start| AgentInputs {
        graph: &instance.graph_v,
        ent_rows: &prep.binding.ent_v,
        rel_rows: &prep.binding.rel_v,
        start,
    });
    let context = start_u.map(|start| AgentInputs {
        graph: &instance.graph_u,
        ent_rows: &prep.binding.ent_u,
        rel_rows: &prep.binding.rel_u,
        start,
    });
    (video, context)
}

/// One decoded episode on one instance: the trace, both serialized paths
/// (empty for a disabled side), and the resulting reward.
#[derive(Debug, Clone)]
pub struct EpisodeOutcome {
    pub trace: EpisodeTrace,
    pub start_v: Option<usize>,
    pub start_u: Option<usize>,
    pub path_v: String,
    pub path_u: String,
    pub reward: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn run_episode(
    params: &ModelParams,
    instance: &TaskInstance,
    prep: &PreparedInstance,
    horizon: usize,
    ablation: AblationMode,
    variant: RougeVariant,
    mode: DecodeMode,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<EpisodeOutcome> {
    let (start_v, start_u) = episode_starts(params, prep, ablation)?;
    let (video, context) = side_inputs(instance, prep, start_v, start_u);
    let trace = rollout_episode(params, video.as_ref(), context.as_ref(), horizon, mode, rng)?;
    let path_v = match (&trace.steps_v, start_v) {
        (Some(steps), Some(start)) => serialize_path(&instance.graph_v, start, steps)?,
        _ => String::new(),
    };
    let path_u = match (&trace.steps_u, start_u) {
        (Some(steps), Some(start)) => serialize_path(&instance.graph_u, start, steps)?,
        _ => String::new(),
    };
    let reward = compute_reward(&path_v, &path_u, &instance.reference, variant);
    Ok(EpisodeOutcome {
        trace,
        start_v,
        start_u,
        path_v,
        path_u,
        reward,
    })
}

/// The surrogate objective one episode contributes: minimizing it pushes
/// probability toward actions with positive advantage.
pub fn episode_loss(trace: &EpisodeTrace, advantage: f64) -> f64 {
    -advantage * trace.log_prob
}

/// Mean greedy-decode reward over a prepared instance set.
pub fn greedy_mean_reward(
    params: &ModelParams,
    instances: &[TaskInstance],
    preps: &[PreparedInstance],
    horizon: usize,
    ablation: AblationMode,
    variant: RougeVariant,
) -> Result<f64> {
    if instances.is_empty() || instances.len() != preps.len() {
        return Err(CopathError::InvalidInput(format!(
            "evaluation needs matching non-empty instance ({}) and preparation ({}) lists",
            instances.len(),
            preps.len()
        )));
    }
    let mut total = 0.0;
    for (inst, prep) in instances.iter().zip(preps) {
        total += run_episode(
            params,
            inst,
            prep,
            horizon,
            ablation,
            variant,
            DecodeMode::Greedy,
            None,
        )?
        .reward;
    }
    Ok(total / instances.len() as f64)
}
