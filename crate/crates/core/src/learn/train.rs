//! The training loop: batches of sampled episodes, exact mean gradients,
//! Adam with an optionally decaying rate, and greedy validation with
//! patience over epochs.
//!
//! Determinism contract: with one config and one dataset, every run
//! produces identical parameters and an identical log, regardless of
//! thread count. Episode seeds derive from the config seed and a global
//! episode counter; batch results are reduced in order.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{DatasetVocab, TaskInstance};
use crate::error::{CopathError, Result};
use crate::lexicon::WordVectors;
use crate::model::{AblationMode, Dims, InitSpec, ModelParams, ScorerKind, ScorerSpec};
use crate::policy::DecodeMode;
use crate::reward::RougeVariant;
use crate::seeding::{mix, rng_from};

use super::{
    episode_backward, episode_loss, greedy_mean_reward, prepare_instances, run_episode,
    side_inputs, AdamState,
};

/// Subtracted from episode rewards before they scale gradients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineConfig {
    /// Raw rewards.
    None,
    /// An exponentially averaged mean batch reward, updated after each
    /// batch uses it: `b ← β·b + (1−β)·mean_reward`, starting from 0.
    MovingAverage { beta: f64 },
}

/// Learning-rate schedule over optimizer steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayKind {
    /// `lr_k = lr₀ · (1 − k/K)` for step k of K (zero-based).
    Linear,
    /// Constant rate.
    None,
}

/// Everything one training run depends on. Serializes to stable JSON, so
/// a run is reproducible from its config alone (plus the dataset).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Steps each agent walks per episode.
    pub horizon: usize,
    /// Sampled episodes averaged into one gradient step.
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Optimizer steps to run (an epoch is one shuffled pass over the
    /// training set; steps cut across epochs).
    pub total_steps: usize,
    pub seed: u64,
    pub ablation: AblationMode,
    pub scorer: ScorerKind,
    /// Score a candidate by its destination entity instead of the source.
    pub score_target: bool,
    /// Keep all four embedding tables at their initialization.
    pub freeze_embeddings: bool,
    pub rouge_variant: RougeVariant,
    /// Epochs of non-improving validation before stopping early;
    /// 0 disables early stopping.
    pub patience: usize,
    pub baseline: BaselineConfig,
    pub decay: DecayKind,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub comm_input_dim: usize,
    /// Width of the uniform initialization for recurrent and scoring
    /// weights.
    pub init_scale: f64,
    /// Noise amplitude added to word-vector means in embedding rows.
    pub embed_noise: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            horizon: 2,
            batch_size: 8,
            learning_rate: 1e-3,
            total_steps: 1000,
            seed: 0,
            ablation: AblationMode::Full,
            scorer: ScorerKind::Linear,
            score_target: false,
            freeze_embeddings: false,
            rouge_variant: RougeVariant::F1,
            patience: 5,
            baseline: BaselineConfig::MovingAverage { beta: 0.9 },
            decay: DecayKind::Linear,
            embed_dim: 100,
            hidden_dim: 200,
            comm_input_dim: 200,
            init_scale: 0.1,
            embed_noise: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn dims(&self) -> Dims {
        Dims {
            embed: self.embed_dim,
            hidden: self.hidden_dim,
            comm_input: self.comm_input_dim,
        }
    }

    pub fn scorer_spec(&self) -> ScorerSpec {
        ScorerSpec {
            kind: self.scorer,
            score_target: self.score_target,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.dims().validate()?;
        if self.horizon == 0 {
            return Err(CopathError::InvalidInput(
                "horizon must be at least 1".into(),
            ));
        }
        if self.batch_size == 0 {
            return Err(CopathError::InvalidInput(
                "batch size must be at least 1".into(),
            ));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(CopathError::InvalidInput(format!(
                "learning rate must be a positive finite number, got {}",
                self.learning_rate
            )));
        }
        if let BaselineConfig::MovingAverage { beta } = self.baseline {
            if !(0.0..1.0).contains(&beta) {
                return Err(CopathError::InvalidInput(format!(
                    "baseline decay must lie in [0, 1), got {beta}"
                )));
            }
        }
        Ok(())
    }
}

/// Stable hash of a config: SHA-256 over its canonical JSON.
pub fn config_hash(config: &TrainConfig) -> Result<String> {
    let json = serde_json::to_string(config)
        .map_err(|e| CopathError::InvalidInput(format!("cannot serialize config: {e}")))?;
    let mut hasher = Sha256::new();
    hasher.update(json.as_bytes());
    Ok(format!("{:x}", hasher.finalize()))
}

/// Result of a run: the selected parameters (best validation reward when a
/// validation set was given, otherwise the final parameters), the vocabulary
/// they index, and run metadata.
pub struct TrainOutput {
    pub params: ModelParams,
    pub vocab: DatasetVocab,
    pub steps_run: usize,
    pub best_validation: Option<f64>,
    pub config_hash: String,
}

#[derive(Serialize)]
struct StepRecord {
    #[serde(rename = "type")]
    kind: &'static str,
    step: usize,
    lr: f64,
    mean_reward: f64,
    loss: f64,
}

#[derive(Serialize)]
struct ValidationRecord {
    #[serde(rename = "type")]
    kind: &'static str,
    step: usize,
    mean_reward: f64,
    best: f64,
    stale_epochs: usize,
}

#[derive(Serialize)]
struct EarlyStopRecord {
    #[serde(rename = "type")]
    kind: &'static str,
    step: usize,
}

fn write_line<T: Serialize>(log: &mut dyn Write, record: &T) -> Result<()> {
    let line = serde_json::to_string(record)
        .map_err(|e| CopathError::InvalidInput(format!("cannot serialize log record: {e}")))?;
    writeln!(log, "{line}").map_err(|source| CopathError::Io {
        path: "training log".into(),
        source,
    })
}

/// Train a fresh model on `train_set`, validating greedily on `val_set`
/// after each epoch. Writes one JSON line per optimizer step and one per
/// validation to `log`.
pub fn train(
    config: &TrainConfig,
    train_set: &[TaskInstance],
    val_set: &[TaskInstance],
    vectors: &WordVectors,
    log: &mut dyn Write,
) -> Result<TrainOutput> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(CopathError::InvalidInput(
            "training needs at least one instance".into(),
        ));
    }
    let hash = config_hash(config)?;

    let mut combined: Vec<TaskInstance> = Vec::with_capacity(train_set.len() + val_set.len());
    combined.extend_from_slice(train_set);
    combined.extend_from_slice(val_set);
    let vocab = DatasetVocab::from_instances(&combined);
    drop(combined);

    let mut params = crate::model::init_model(&InitSpec {
        entities_v: vocab.ent_v.names(),
        relations_v: vocab.rel_v.names(),
        entities_u: vocab.ent_u.names(),
        relations_u: vocab.rel_u.names(),
        vectors,
        dims: config.dims(),
        init_scale: config.init_scale,
        embed_noise: config.embed_noise,
        seed: config.seed,
        wiring: config.ablation.wiring_kind(),
        scorer: config.scorer_spec(),
    })?;

    let train_preps = prepare_instances(train_set, &vocab, vectors)?;
    let val_preps = prepare_instances(val_set, &vocab, vectors)?;

    let mut adam = AdamState::new(
        params.param_count(),
        config.beta1,
        config.beta2,
        config.epsilon,
    )?;

    // Model initialization consumes seed streams 0..=7; keep the shuffle
    // and episode streams clear of them.
    let shuffle_base = mix(config.seed, 8);
    let episode_base = mix(config.seed, 9);

    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut cursor = order.len(); // forces a shuffle before the first draw
    let mut epoch = 0u64;
    let mut episode_counter = 0u64;
    let mut epochs_validated = 0u64;

    let mut baseline_value = 0.0f64;
    let mut best_validation: Option<f64> = None;
    let mut best_params: Option<ModelParams> = None;
    let mut stale_epochs = 0usize;
    let mut steps_run = 0usize;

    'steps: for step in 0..config.total_steps {
        // Draw the batch, reshuffling at epoch boundaries.
        let mut jobs: Vec<(usize, u64)> = Vec::with_capacity(config.batch_size);
        for _ in 0..config.batch_size {
            if cursor == order.len() {
                let mut rng = rng_from(mix(shuffle_base, epoch));
                shuffle(&mut order, &mut rng);
                epoch += 1;
                cursor = 0;
            }
            jobs.push((order[cursor], mix(episode_base, episode_counter)));
            cursor += 1;
            episode_counter += 1;
        }

        let lr = match config.decay {
            DecayKind::Linear => {
                config.learning_rate * (1.0 - step as f64 / config.total_steps as f64)
            }
            DecayKind::None => config.learning_rate,
        };

        let baseline = baseline_value;
        let results: Result<Vec<(ModelParams, f64, f64)>> = jobs
            .par_iter()
            .map(|&(idx, episode_seed)| {
                let instance = &train_set[idx];
                let prep = &train_preps[idx];
                let mut rng = rng_from(episode_seed);
                let outcome = run_episode(
                    &params,
                    instance,
                    prep,
                    config.horizon,
                    config.ablation,
                    config.rouge_variant,
                    DecodeMode::Sample,
                    Some(&mut rng),
                )?;
                let advantage = outcome.reward - baseline;
                let (video, context) =
                    side_inputs(instance, prep, outcome.start_v, outcome.start_u);
                let grads = episode_backward(
                    &params,
                    video.as_ref(),
                    context.as_ref(),
                    &outcome.trace,
                    advantage,
                )?;
                let loss = episode_loss(&outcome.trace, advantage);
                Ok((grads, outcome.reward, loss))
            })
            .collect();
        let results = results?;

        let scale = 1.0 / config.batch_size as f64;
        let mut mean_grads = params.zeros_like();
        let mut mean_reward = 0.0;
        let mut mean_loss = 0.0;
        for (grads, reward, loss) in &results {
            mean_grads.axpy(scale, grads)?;
            mean_reward += scale * reward;
            mean_loss += scale * loss;
        }
        if config.freeze_embeddings {
            mean_grads.emb.ent_v.fill(0.0);
            mean_grads.emb.rel_v.fill(0.0);
            mean_grads.emb.ent_u.fill(0.0);
            mean_grads.emb.rel_u.fill(0.0);
        }

        adam.apply(&mut params, &mean_grads, lr)?;
        steps_run = step + 1;

        write_line(
            log,
            &StepRecord {
                kind: "step",
                step,
                lr,
                mean_reward,
                loss: mean_loss,
            },
        )?;

        if let BaselineConfig::MovingAverage { beta } = config.baseline {
            baseline_value = beta * baseline_value + (1.0 - beta) * mean_reward;
        }

        // One epoch is train_set.len() episodes; validate whenever the
        // batch just completed one.
        let epochs_completed = episode_counter / train_set.len() as u64;
        if !val_set.is_empty() && epochs_completed > epochs_validated {
            epochs_validated = epochs_completed;
            let val_reward = greedy_mean_reward(
                &params,
                val_set,
                &val_preps,
                config.horizon,
                config.ablation,
                config.rouge_variant,
            )?;
            let improved = best_validation.is_none_or(|best| val_reward > best);
            if improved {
                best_validation = Some(val_reward);
                best_params = Some(params.clone());
                stale_epochs = 0;
            } else {
                stale_epochs += 1;
            }
            write_line(
                log,
                &ValidationRecord {
                    kind: "validation",
                    step,
                    mean_reward: val_reward,
                    best: best_validation.unwrap_or(val_reward),
                    stale_epochs,
                },
            )?;
            if config.patience > 0 && stale_epochs >= config.patience {
                write_line(log, &EarlyStopRecord { kind: "early_stop", step })?;
                break 'steps;
            }
        }
    }

    let params = best_params.unwrap_or(params);
    Ok(TrainOutput {
        params,
        vocab,
        steps_run,
        best_validation,
        config_hash: hash,
    })
}

/// Fisher–Yates with a seeded stream.
fn shuffle(order: &mut [usize], rng: &mut rand_chacha::ChaCha8Rng) {
    use rand::Rng;
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
}
