//! Parameter containers for the full two-agent model, plus the flat tensor
//! manifest used by checkpoints, the optimizer, and finite-difference
//! testing.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::comms::CommParams;
use crate::error::{CopathError, Result};
use crate::lexicon::{init_embeddings, EmbeddingSet, WordVectors};
use crate::seeding;

/// Layer widths. `embed` is the entity/relation embedding width, `hidden`
/// the recurrent state width, `comm_input` the width of the projected cell
/// input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub embed: usize,
    pub hidden: usize,
    pub comm_input: usize,
}

impl Default for Dims {
    fn default() -> Self {
        Dims {
            embed: 100,
            hidden: 200,
            comm_input: 200,
        }
    }
}

impl Dims {
    pub fn validate(&self) -> Result<()> {
        if self.embed == 0 || self.hidden == 0 || self.comm_input == 0 {
            return Err(CopathError::InvalidInput(format!(
                "all model dimensions must be positive, got embed={} hidden={} comm_input={}",
                self.embed, self.hidden, self.comm_input
            )));
        }
        Ok(())
    }
}

/// Which pieces of the model are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AblationMode {
    /// Both graphs, one shared communicator.
    #[serde(rename = "full")]
    Full,
    /// Both graphs, but each agent keeps a private recurrent encoder: no
    /// information crosses between them.
    #[serde(rename = "no-comm")]
    NoCommunicator,
    /// Context agent only; the video slots of the communicator input are
    /// zeroed and the video path is empty.
    #[serde(rename = "no-vgraph")]
    NoVideoGraph,
    /// Video agent only; the context slots of the communicator input are
    /// zeroed and the context path is empty.
    #[serde(rename = "no-ugraph")]
    NoContextGraph,
}

impl AblationMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            AblationMode::Full => "full",
            AblationMode::NoCommunicator => "no-comm",
            AblationMode::NoVideoGraph => "no-vgraph",
            AblationMode::NoContextGraph => "no-ugraph",
        }
    }

    pub fn uses_video(&self) -> bool {
        !matches!(self, AblationMode::NoVideoGraph)
    }

    pub fn uses_context(&self) -> bool {
        !matches!(self, AblationMode::NoContextGraph)
    }

    /// The recurrent wiring this mode requires.
    pub fn wiring_kind(&self) -> WiringKind {
        match self {
            AblationMode::NoCommunicator => WiringKind::Private,
            _ => WiringKind::Shared,
        }
    }
}

impl std::str::FromStr for AblationMode {
    type Err = CopathError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(AblationMode::Full),
            "no-comm" => Ok(AblationMode::NoCommunicator),
            "no-vgraph" => Ok(AblationMode::NoVideoGraph),
            "no-ugraph" => Ok(AblationMode::NoContextGraph),
            other => Err(CopathError::InvalidInput(format!(
                "unknown ablation mode '{other}' (expected full, no-comm, no-vgraph, or no-ugraph)"
            ))),
        }
    }
}

impl std::fmt::Display for AblationMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How edge scores are computed from the recurrent state and embeddings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScorerKind {
    /// One weight row over `[h; E(entity); E(relation)]`. The state and
    /// entity contributions are shared by every candidate at a node, so
    /// after the softmax only the relation term separates candidates.
    #[serde(rename = "linear")]
    Linear,
    /// A context vector `W_a [h; E(entity)]` dotted with each candidate's
    /// feature embedding, so the state changes the ranking of candidates.
    #[serde(rename = "bilinear")]
    Bilinear,
}

impl ScorerKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScorerKind::Linear => "linear",
            ScorerKind::Bilinear => "bilinear",
        }
    }
}

impl std::str::FromStr for ScorerKind {
    type Err = CopathError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(ScorerKind::Linear),
            "bilinear" => Ok(ScorerKind::Bilinear),
            other => Err(CopathError::InvalidInput(format!(
                "unknown scorer '{other}' (expected linear or bilinear)"
            ))),
        }
    }
}

impl std::fmt::Display for ScorerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Scorer configuration. With `score_target` unset the entity fed to the
/// scorer is the entity the agent currently occupies; set, it is each
/// candidate edge's destination, which lets entity embeddings separate
/// candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScorerSpec {
    pub kind: ScorerKind,
    pub score_target: bool,
}

impl Default for ScorerSpec {
    fn default() -> Self {
        ScorerSpec {
            kind: ScorerKind::Linear,
            score_target: false,
        }
    }
}

/// Per-agent scoring weights. Shape depends on the scorer kind:
/// `(1, hidden + 2·embed)` for the linear scorer, `(embed, hidden + embed)`
/// for the bilinear one.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentParams {
    pub w_a: Array2<f64>,
}

impl AgentParams {
    pub fn init(dims: Dims, kind: ScorerKind, scale: f64, rng: &mut rand_chacha::ChaCha8Rng) -> Self {
        use rand::Rng;
        let (rows, cols) = w_a_shape(dims, kind);
        let mut w_a = Array2::<f64>::zeros((rows, cols));
        for x in w_a.iter_mut() {
            *x = rng.gen_range(-scale..=scale);
        }
        AgentParams { w_a }
    }
}

/// Expected scoring-weight shape for a scorer kind.
pub fn w_a_shape(dims: Dims, kind: ScorerKind) -> (usize, usize) {
    match kind {
        ScorerKind::Linear => (1, dims.hidden + 2 * dims.embed),
        ScorerKind::Bilinear => (dims.embed, dims.hidden + dims.embed),
    }
}

/// Recurrent wiring: one shared communicator over both agents'
/// action/observation pairs, or one private encoder per agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WiringKind {
    #[serde(rename = "shared")]
    Shared,
    #[serde(rename = "private")]
    Private,
}

// One value of this lives per model and the payloads are pointer-backed
// arrays, so the variant size gap is irrelevant; boxing would only add a
// layer to every match.
#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone, PartialEq)]
pub enum CommWiring {
    Shared(CommParams),
    Private {
        video: CommParams,
        context: CommParams,
    },
}

impl CommWiring {
    pub fn kind(&self) -> WiringKind {
        match self {
            CommWiring::Shared(_) => WiringKind::Shared,
            CommWiring::Private { .. } => WiringKind::Private,
        }
    }
}

/// All trainable parameters of the model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub dims: Dims,
    pub emb: EmbeddingSet,
    pub comm: CommWiring,
    pub agent_v: AgentParams,
    pub agent_u: AgentParams,
    pub scorer: ScorerSpec,
}

/// Everything `init_model` needs.
pub struct InitSpec<'a> {
    pub entities_v: &'a [Vec<String>],
    pub relations_v: &'a [Vec<String>],
    pub entities_u: &'a [Vec<String>],
    pub relations_u: &'a [Vec<String>],
    pub vectors: &'a WordVectors,
    pub dims: Dims,
    pub init_scale: f64,
    pub embed_noise: f64,
    pub seed: u64,
    pub wiring: WiringKind,
    pub scorer: ScorerSpec,
}

/// Seeded model initialization. Embedding rows start at the mean word
/// vector of their name plus small noise; gate and projection weights are
/// uniform in ±`init_scale` except the forget-gate bias, which starts at 1.
/// Every tensor draws from its own derived stream, so the result is a pure
/// function of the `InitSpec`.
pub fn init_model(spec: &InitSpec) -> Result<ModelParams> {
    spec.dims.validate()?;
    if !(spec.init_scale.is_finite() && spec.init_scale >= 0.0) {
        return Err(CopathError::InvalidInput(format!(
            "init scale must be a non-negative finite number, got {}",
            spec.init_scale
        )));
    }
    let emb = init_embeddings(
        spec.entities_v,
        spec.relations_v,
        spec.entities_u,
        spec.relations_u,
        spec.vectors,
        spec.dims.embed,
        spec.embed_noise,
        spec.seed,
    )?;
    let d = spec.dims.embed;
    let comm = match spec.wiring {
        WiringKind::Shared => {
            let mut rng = seeding::rng_from(seeding::mix(spec.seed, 4));
            CommWiring::Shared(CommParams::init(
                4 * d,
                spec.dims.comm_input,
                spec.dims.hidden,
                spec.init_scale,
                &mut rng,
            ))
        }
        WiringKind::Private => {
            let mut rng_v = seeding::rng_from(seeding::mix(spec.seed, 4));
            let mut rng_u = seeding::rng_from(seeding::mix(spec.seed, 5));
            CommWiring::Private {
                video: CommParams::init(
                    2 * d,
                    spec.dims.comm_input,
                    spec.dims.hidden,
                    spec.init_scale,
                    &mut rng_v,
                ),
                context: CommParams::init(
                    2 * d,
                    spec.dims.comm_input,
                    spec.dims.hidden,
                    spec.init_scale,
                    &mut rng_u,
                ),
            }
        }
    };
    let mut rng_av = seeding::rng_from(seeding::mix(spec.seed, 6));
    let mut rng_au = seeding::rng_from(seeding::mix(spec.seed, 7));
    Ok(ModelParams {
        dims: spec.dims,
        emb,
        comm,
        agent_v: AgentParams::init(spec.dims, spec.scorer.kind, spec.init_scale, &mut rng_av),
        agent_u: AgentParams::init(spec.dims, spec.scorer.kind, spec.init_scale, &mut rng_au),
        scorer: spec.scorer,
    })
}

/// Borrowed view of one named tensor.
pub enum TensorView<'a> {
    M(&'a Array2<f64>),
    V(&'a Array1<f64>),
}

pub enum TensorViewMut<'a> {
    M(&'a mut Array2<f64>),
    V(&'a mut Array1<f64>),
}

impl TensorView<'_> {
    pub fn shape(&self) -> Vec<usize> {
        match self {
            TensorView::M(m) => m.shape().to_vec(),
            TensorView::V(v) => vec![v.len()],
        }
    }

    pub fn len(&self) -> usize {
        match self {
            TensorView::M(m) => m.len(),
            TensorView::V(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn comm_tensors<'a>(prefix: &str, p: &'a CommParams) -> Vec<(String, TensorView<'a>)> {
    vec![
        (format!("{prefix}.w_c"), TensorView::M(&p.w_c)),
        (format!("{prefix}.w_i"), TensorView::M(&p.w_i)),
        (format!("{prefix}.b_i"), TensorView::V(&p.b_i)),
        (format!("{prefix}.w_f"), TensorView::M(&p.w_f)),
        (format!("{prefix}.b_f"), TensorView::V(&p.b_f)),
        (format!("{prefix}.w_o"), TensorView::M(&p.w_o)),
        (format!("{prefix}.b_o"), TensorView::V(&p.b_o)),
        (format!("{prefix}.w_g"), TensorView::M(&p.w_g)),
        (format!("{prefix}.b_g"), TensorView::V(&p.b_g)),
    ]
}

fn comm_tensors_mut<'a>(prefix: &str, p: &'a mut CommParams) -> Vec<(String, TensorViewMut<'a>)> {
    vec![
        (format!("{prefix}.w_c"), TensorViewMut::M(&mut p.w_c)),
        (format!("{prefix}.w_i"), TensorViewMut::M(&mut p.w_i)),
        (format!("{prefix}.b_i"), TensorViewMut::V(&mut p.b_i)),
        (format!("{prefix}.w_f"), TensorViewMut::M(&mut p.w_f)),
        (format!("{prefix}.b_f"), TensorViewMut::V(&mut p.b_f)),
        (format!("{prefix}.w_o"), TensorViewMut::M(&mut p.w_o)),
        (format!("{prefix}.b_o"), TensorViewMut::V(&mut p.b_o)),
        (format!("{prefix}.w_g"), TensorViewMut::M(&mut p.w_g)),
        (format!("{prefix}.b_g"), TensorViewMut::V(&mut p.b_g)),
    ]
}

impl ModelParams {
    /// Named tensors in the fixed serialization order. Matrices flatten
    /// row-major.
    pub fn tensors(&self) -> Vec<(String, TensorView<'_>)> {
        let mut out: Vec<(String, TensorView<'_>)> = vec![
            ("emb.ent_v".into(), TensorView::M(&self.emb.ent_v)),
            ("emb.rel_v".into(), TensorView::M(&self.emb.rel_v)),
            ("emb.ent_u".into(), TensorView::M(&self.emb.ent_u)),
            ("emb.rel_u".into(), TensorView::M(&self.emb.rel_u)),
        ];
        match &self.comm {
            CommWiring::Shared(p) => out.extend(comm_tensors("comm", p)),
            CommWiring::Private { video, context } => {
                out.extend(comm_tensors("comm.video", video));
                out.extend(comm_tensors("comm.context", context));
            }
        }
        out.push(("agent_v.w_a".into(), TensorView::M(&self.agent_v.w_a)));
        out.push(("agent_u.w_a".into(), TensorView::M(&self.agent_u.w_a)));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, TensorViewMut<'_>)> {
        let mut out: Vec<(String, TensorViewMut<'_>)> = vec![
            ("emb.ent_v".into(), TensorViewMut::M(&mut self.emb.ent_v)),
            ("emb.rel_v".into(), TensorViewMut::M(&mut self.emb.rel_v)),
            ("emb.ent_u".into(), TensorViewMut::M(&mut self.emb.ent_u)),
            ("emb.rel_u".into(), TensorViewMut::M(&mut self.emb.rel_u)),
        ];
        match &mut self.comm {
            CommWiring::Shared(p) => out.extend(comm_tensors_mut("comm", p)),
            CommWiring::Private { video, context } => {
                out.extend(comm_tensors_mut("comm.video", video));
                out.extend(comm_tensors_mut("comm.context", context));
            }
        }
        out.push(("agent_v.w_a".into(), TensorViewMut::M(&mut self.agent_v.w_a)));
        out.push(("agent_u.w_a".into(), TensorViewMut::M(&mut self.agent_u.w_a)));
        out
    }

    /// (name, shape) pairs in serialization order.
    pub fn manifest(&self) -> Vec<(String, Vec<usize>)> {
        self.tensors()
            .into_iter()
            .map(|(name, view)| (name, view.shape()))
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|(_, v)| v.len()).sum()
    }

    /// All parameters as one flat vector in manifest order (matrices
    /// row-major).
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for (_, view) in self.tensors() {
            match view {
                TensorView::M(m) => out.extend(m.iter().copied()),
                TensorView::V(v) => out.extend(v.iter().copied()),
            }
        }
        out
    }

    /// Overwrite all parameters from a flat vector in manifest order.
    pub fn assign_from_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(CopathError::InvalidInput(format!(
                "flat parameter vector has {} values, model needs {}",
                flat.len(),
                self.param_count()
            )));
        }
        let mut offset = 0usize;
        for (_, view) in self.tensors_mut() {
            match view {
                TensorViewMut::M(m) => {
                    for x in m.iter_mut() {
                        *x = flat[offset];
                        offset += 1;
                    }
                }
                TensorViewMut::V(v) => {
                    for x in v.iter_mut() {
                        *x = flat[offset];
                        offset += 1;
                    }
                }
            }
        }
        Ok(())
    }

    /// A same-shaped parameter set with every value zero — the gradient
    /// accumulator shape.
    pub fn zeros_like(&self) -> ModelParams {
        let mut out = self.clone();
        for (_, view) in out.tensors_mut() {
            match view {
                TensorViewMut::M(m) => m.fill(0.0),
                TensorViewMut::V(v) => v.fill(0.0),
            }
        }
        out
    }

    /// `self += a · other`, tensor by tensor. Shapes must match.
    pub fn axpy(&mut self, a: f64, other: &ModelParams) -> Result<()> {
        let other_flat = other.flatten();
        if other_flat.len() != self.param_count() {
            return Err(CopathError::InvalidInput(
                "parameter sets have different shapes".into(),
            ));
        }
        let mut flat = self.flatten();
        for (x, o) in flat.iter_mut().zip(other_flat.iter()) {
            *x += a * o;
        }
        self.assign_from_flat(&flat)
    }

    /// Half-open index range of one named tensor inside the flat vector.
    pub fn tensor_range(&self, name: &str) -> Option<std::ops::Range<usize>> {
        let mut offset = 0usize;
        for (n, view) in self.tensors() {
            let len = view.len();
            if n == name {
                return Some(offset..offset + len);
            }
            offset += len;
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::WordVectors;

    fn names(list: &[&str]) -> Vec<Vec<String>> {
        list.iter()
            .map(|s| s.split_whitespace().map(str::to_string).collect())
            .collect()
    }

    fn tiny_model(seed: u64, wiring: WiringKind) -> ModelParams {
        let entities_v = names(&["a", "b"]);
        let relations_v = names(&["STAY", "r"]);
        let entities_u = names(&["x"]);
        let relations_u = names(&["STAY"]);
        let vectors = WordVectors::from_entries(vec![]).unwrap();
        init_model(&InitSpec {
            entities_v: &entities_v,
            relations_v: &relations_v,
            entities_u: &entities_u,
            relations_u: &relations_u,
            vectors: &vectors,
            dims: Dims {
                embed: 3,
                hidden: 2,
                comm_input: 2,
            },
            init_scale: 0.1,
            embed_noise: 0.01,
            seed,
            wiring,
            scorer: ScorerSpec::default(),
        })
        .unwrap()
    }

    #[test]
    fn manifest_order_is_fixed() {
        let model = tiny_model(7, WiringKind::Shared);
        let names: Vec<String> = model.manifest().into_iter().map(|(n, _)| n).collect();
        assert_eq!(
            names,
            vec![
                "emb.ent_v", "emb.rel_v", "emb.ent_u", "emb.rel_u", "comm.w_c", "comm.w_i",
                "comm.b_i", "comm.w_f", "comm.b_f", "comm.w_o", "comm.b_o", "comm.w_g", "comm.b_g",
                "agent_v.w_a", "agent_u.w_a",
            ]
        );
    }

    #[test]
    fn private_wiring_manifest_has_both_encoders() {
        let model = tiny_model(7, WiringKind::Private);
        let names: Vec<String> = model.manifest().into_iter().map(|(n, _)| n).collect();
        assert!(names.contains(&"comm.video.w_c".to_string()));
        assert!(names.contains(&"comm.context.b_g".to_string()));
        assert!(!names.contains(&"comm.w_c".to_string()));
        // Private encoders consume one agent's (relation, entity) pair.
        match &model.comm {
            CommWiring::Private { video, context } => {
                assert_eq!(video.concat_dim(), 6);
                assert_eq!(context.concat_dim(), 6);
            }
            _ => panic!("expected private wiring"),
        }
    }

    #[test]
    fn flatten_round_trips() {
        let model = tiny_model(7, WiringKind::Shared);
        let flat = model.flatten();
        assert_eq!(flat.len(), model.param_count());
        let mut copy = model.zeros_like();
        assert!(copy.flatten().iter().all(|&x| x == 0.0));
        copy.assign_from_flat(&flat).unwrap();
        assert_eq!(copy, model);
    }

    #[test]
    fn axpy_adds_scaled_values() {
        let model = tiny_model(7, WiringKind::Shared);
        let mut target = model.clone();
        target.axpy(-1.0, &model).unwrap();
        assert!(target.flatten().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn tensor_range_matches_flatten_layout() {
        let model = tiny_model(7, WiringKind::Shared);
        // ent_v is 2x3 = 6 values and comes first.
        assert_eq!(model.tensor_range("emb.ent_v").unwrap(), 0..6);
        // rel_v (2x3) follows.
        assert_eq!(model.tensor_range("emb.rel_v").unwrap(), 6..12);
        assert!(model.tensor_range("nope").is_none());
        let last = model.tensor_range("agent_u.w_a").unwrap();
        assert_eq!(last.end, model.param_count());
    }

    #[test]
    fn init_is_seed_deterministic() {
        let a = tiny_model(7, WiringKind::Shared);
        let b = tiny_model(7, WiringKind::Shared);
        assert_eq!(a, b);
        let c = tiny_model(8, WiringKind::Shared);
        assert_ne!(a.flatten(), c.flatten());
    }

    #[test]
    fn scorer_shapes_follow_kind() {
        let dims = Dims {
            embed: 3,
            hidden: 2,
            comm_input: 2,
        };
        assert_eq!(w_a_shape(dims, ScorerKind::Linear), (1, 2 + 6));
        assert_eq!(w_a_shape(dims, ScorerKind::Bilinear), (3, 2 + 3));
    }

    #[test]
    fn mode_strings_round_trip() {
        for mode in [
            AblationMode::Full,
            AblationMode::NoCommunicator,
            AblationMode::NoVideoGraph,
            AblationMode::NoContextGraph,
        ] {
            let parsed: AblationMode = mode.as_str().parse().unwrap();
            assert_eq!(parsed, mode);
            let json = serde_json::to_string(&mode).unwrap();
            assert_eq!(json, format!("\"{}\"", mode.as_str()));
        }
        assert!("nope".parse::<AblationMode>().is_err());
        assert_eq!(AblationMode::NoCommunicator.wiring_kind(), WiringKind::Private);
        assert_eq!(AblationMode::NoVideoGraph.wiring_kind(), WiringKind::Shared);
        assert!(!AblationMode::NoVideoGraph.uses_video());
        assert!(AblationMode::NoVideoGraph.uses_context());
    }
}
