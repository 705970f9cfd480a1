//! Batch evaluation: decode a model over task instances and report per-
//! instance rewards, exhaustive-search ceilings, planted-path recovery,
//! and the assembled answer lines.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assemble::assemble_answer;
use crate::dataset::{DatasetVocab, TaskInstance};
use crate::error::{CopathError, Result};
use crate::learn::{prepare_instances, run_episode, side_inputs, EpisodeOutcome};
use crate::lexicon::WordVectors;
use crate::model::{AblationMode, ModelParams, WiringKind};
use crate::policy::{beam_decode, serialize_path, DecodeMode};
use crate::reward::{compute_reward, RougeVariant};
use crate::seeding::{mix, rng_from};
use crate::synth::{brute_force_oracle, DEFAULT_WALK_BOUND};

/// How paths are decoded at evaluation time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DecodeSpec {
    /// Stepwise argmax (the default).
    #[default]
    Greedy,
    /// Sampled decoding; instance i draws from a stream derived from
    /// (seed, i), so reports stay reproducible.
    Sample { seed: u64 },
    /// Joint beam over both agents' actions.
    Beam { width: usize },
}

impl FromStr for DecodeSpec {
    type Err = CopathError;

    fn from_str(s: &str) -> Result<Self> {
        if s == "greedy" {
            return Ok(DecodeSpec::Greedy);
        }
        if s == "sample" {
            return Ok(DecodeSpec::Sample { seed: 0 });
        }
        if let Some(rest) = s.strip_prefix("sample:") {
            let seed = rest.parse::<u64>().map_err(|_| {
                CopathError::InvalidInput(format!("bad sampling seed in decode spec '{s}'"))
            })?;
            return Ok(DecodeSpec::Sample { seed });
        }
        if let Some(rest) = s.strip_prefix("beam:") {
            let width = rest.parse::<usize>().map_err(|_| {
                CopathError::InvalidInput(format!("bad beam width in decode spec '{s}'"))
            })?;
            if width == 0 {
                return Err(CopathError::InvalidInput(
                    "beam width must be at least 1".into(),
                ));
            }
            return Ok(DecodeSpec::Beam { width });
        }
        Err(CopathError::InvalidInput(format!(
            "unknown decode spec '{s}' (expected greedy, sample[:seed], or beam:width)"
        )))
    }
}

impl fmt::Display for DecodeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DecodeSpec::Greedy => write!(f, "greedy"),
            DecodeSpec::Sample { seed } => write!(f, "sample:{seed}"),
            DecodeSpec::Beam { width } => write!(f, "beam:{width}"),
        }
    }
}

impl Serialize for DecodeSpec {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for DecodeSpec {
    fn deserialize<D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Evaluation settings.
#[derive(Debug, Clone, Copy)]
pub struct EvalConfig {
    pub horizon: usize,
    pub decode: DecodeSpec,
    pub variant: RougeVariant,
    /// Also compute each instance's exhaustive-search reward ceiling.
    pub oracle: bool,
    /// Walk-count bound per side for the exhaustive search.
    pub walk_bound: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            horizon: 2,
            decode: DecodeSpec::Greedy,
            variant: RougeVariant::F1,
            oracle: false,
            walk_bound: DEFAULT_WALK_BOUND,
        }
    }
}

/// One instance's evaluation row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceReport {
    pub seed: u64,
    pub reward: f64,
    pub path_v: String,
    pub path_u: String,
    /// Both paths and the utterance joined with the separator token.
    pub answer: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<f64>,
    /// Whether every active side reproduced its planted walk exactly;
    /// absent when an active side has no planted walk to compare against.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recovered: Option<bool>,
}

/// One sibling ablation's summary next to the main report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationComparison {
    pub mode: AblationMode,
    pub mean_reward: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recovery_rate: Option<f64>,
}

/// A full evaluation report. Serializes deterministically.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub config_hash: String,
    pub ablation: AblationMode,
    pub decode: DecodeSpec,
    pub horizon: usize,
    pub count: usize,
    pub mean_reward: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_oracle: Option<f64>,
    /// Σ reward / Σ oracle ceiling, when the ceiling was computed and is
    /// positive.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle_ratio: Option<f64>,
    /// Fraction of comparable instances whose active sides all walked
    /// their planted paths exactly.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recovery_rate: Option<f64>,
    /// The same model re-evaluated under each sibling ablation the wiring
    /// supports, for side-by-side comparison.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ablation_comparisons: Option<Vec<AblationComparison>>,
    pub instances: Vec<InstanceReport>,
}

/// The ablations a given recurrent wiring can serve.
pub fn compatible_modes(wiring: WiringKind) -> &'static [AblationMode] {
    match wiring {
        WiringKind::Shared => &[
            AblationMode::Full,
            AblationMode::NoVideoGraph,
            AblationMode::NoContextGraph,
        ],
        WiringKind::Private => &[AblationMode::NoCommunicator],
    }
}

/// Decode one instance under the configured mode. `index` feeds the
/// per-instance sampling stream.
pub fn decode_instance(
    params: &ModelParams,
    instance: &TaskInstance,
    prep: &crate::learn::PreparedInstance,
    cfg: &EvalConfig,
    index: u64,
    ablation: AblationMode,
) -> Result<EpisodeOutcome> {
    match cfg.decode {
        DecodeSpec::Greedy => run_episode(
            params,
            instance,
            prep,
            cfg.horizon,
            ablation,
            cfg.variant,
            DecodeMode::Greedy,
            None,
        ),
        DecodeSpec::Sample { seed } => {
            let mut rng = rng_from(mix(seed, index));
            run_episode(
                params,
                instance,
                prep,
                cfg.horizon,
                ablation,
                cfg.variant,
                DecodeMode::Sample,
                Some(&mut rng),
            )
        }
        DecodeSpec::Beam { width } => {
            let (start_v, start_u) = crate::learn::episode_starts(params, prep, ablation)?;
            let (video, context) = side_inputs(instance, prep, start_v, start_u);
            let trace = beam_decode(params, video.as_ref(), context.as_ref(), cfg.horizon, width)?;
            let path_v = match (&trace.steps_v, start_v) {
                (Some(steps), Some(start)) => serialize_path(&instance.graph_v, start, steps)?,
                _ => String::new(),
            };
            let path_u = match (&trace.steps_u, start_u) {
                (Some(steps), Some(start)) => serialize_path(&instance.graph_u, start, steps)?,
                _ => String::new(),
            };
            let reward = compute_reward(&path_v, &path_u, &instance.reference, cfg.variant);
            Ok(EpisodeOutcome {
                trace,
                start_v,
                start_u,
                path_v,
                path_u,
                reward,
            })
        }
    }
}

/// Recovery of one instance: every active side with a planted walk must
/// serialize to exactly the planted tokens. `None` when an active side has
/// nothing to compare against.
fn recovery(instance: &TaskInstance, outcome: &EpisodeOutcome, ablation: AblationMode) -> Option<bool> {
    let mut verdict = true;
    if ablation.uses_video() {
        verdict &= outcome.path_v == instance.planted_v.as_ref()?.serialized;
    }
    if ablation.uses_context() {
        verdict &= outcome.path_u == instance.planted_u.as_ref()?.serialized;
    }
    Some(verdict)
}

/// Evaluate a model over an instance set.
pub fn evaluate(
    params: &ModelParams,
    vocab: &DatasetVocab,
    ablation: AblationMode,
    config_hash: &str,
    instances: &[TaskInstance],
    vectors: &WordVectors,
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    if instances.is_empty() {
        return Err(CopathError::InvalidInput(
            "evaluation needs at least one instance".into(),
        ));
    }
    if cfg.horizon == 0 {
        return Err(CopathError::InvalidInput(
            "horizon must be at least 1".into(),
        ));
    }
    let preps = prepare_instances(instances, vocab, vectors)?;
    // Instances are independent; decode them in parallel and aggregate in
    // input order so reports stay deterministic.
    let rows: Result<Vec<InstanceReport>> = instances
        .par_iter()
        .zip(preps.par_iter())
        .enumerate()
        .map(|(i, (instance, prep))| {
            let outcome = decode_instance(params, instance, prep, cfg, i as u64, ablation)?;
            let oracle = if cfg.oracle {
                Some(brute_force_oracle(instance, cfg.horizon, cfg.variant, cfg.walk_bound)?.total())
            } else {
                None
            };
            let recovered = recovery(instance, &outcome, ablation);
            Ok(InstanceReport {
                seed: instance.seed,
                reward: outcome.reward,
                answer: assemble_answer(
                    &outcome.path_v,
                    &outcome.path_u,
                    &instance.utterance.join(" "),
                ),
                path_v: outcome.path_v,
                path_u: outcome.path_u,
                oracle,
                recovered,
            })
        })
        .collect();
    let rows = rows?;
    let mut reward_sum = 0.0;
    let mut oracle_sum = 0.0;
    let mut recovered_true = 0usize;
    let mut recovered_total = 0usize;
    for row in &rows {
        reward_sum += row.reward;
        if let Some(o) = row.oracle {
            oracle_sum += o;
        }
        if let Some(r) = row.recovered {
            recovered_total += 1;
            recovered_true += r as usize;
        }
    }
    let count = instances.len();
    Ok(EvalReport {
        config_hash: config_hash.to_string(),
        ablation,
        decode: cfg.decode,
        horizon: cfg.horizon,
        count,
        mean_reward: reward_sum / count as f64,
        mean_oracle: cfg.oracle.then_some(oracle_sum / count as f64),
        oracle_ratio: (cfg.oracle && oracle_sum > 0.0).then_some(reward_sum / oracle_sum),
        recovery_rate: (recovered_total > 0)
            .then_some(recovered_true as f64 / recovered_total as f64),
        ablation_comparisons: None,
        instances: rows,
    })
}

/// Evaluate under `ablation`, then re-evaluate under every sibling mode
/// the wiring supports and attach the summaries.
pub fn evaluate_with_comparisons(
    params: &ModelParams,
    vocab: &DatasetVocab,
    ablation: AblationMode,
    config_hash: &str,
    instances: &[TaskInstance],
    vectors: &WordVectors,
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    let mut report = evaluate(params, vocab, ablation, config_hash, instances, vectors, cfg)?;
    let mut rows = Vec::new();
    for &mode in compatible_modes(params.comm.kind()) {
        let sibling = evaluate(params, vocab, mode, config_hash, instances, vectors, cfg)?;
        rows.push(AblationComparison {
            mode,
            mean_reward: sibling.mean_reward,
            recovery_rate: sibling.recovery_rate,
        });
    }
    report.ablation_comparisons = Some(rows);
    Ok(report)
}

/// Render a report as pretty JSON (stable field order, trailing newline).
pub fn report_to_json(report: &EvalReport) -> Result<String> {
    serde_json::to_string_pretty(report)
        .map(|mut s| {
            s.push('\n');
            s
        })
        .map_err(|e| CopathError::InvalidInput(format!("cannot serialize report: {e}")))
}
