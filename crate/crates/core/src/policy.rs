//! Agent policies over graph edges: scoring, softmax distributions,
//! greedy/sampled rollouts, joint beam search, and path serialization.
//!
//! Both agents act once per step. At step 0 they condition on the all-zero
//! recurrent state; the state produced after step t is what the policies
//! see at step t+1. The recurrent update after the final step has no
//! consumer and is skipped.

use ndarray::{concatenate, Array1, Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::comms::{comm_input, comm_step, CommState, CommStepCache};
use crate::error::{CopathError, Result};
use crate::model::{CommWiring, ModelParams, ScorerKind, ScorerSpec};
use crate::semgraph::{SemanticGraph, STAY_RELATION};

/// How actions are chosen during a rollout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeMode {
    /// Highest-probability candidate; ties keep the lowest candidate index.
    Greedy,
    /// Draw from the policy distribution (requires an RNG).
    Sample,
}

/// One agent's episode inputs: its graph, the mapping from local
/// entity/relation ids to rows of the shared embedding tables, and the
/// start entity.
#[derive(Debug, Clone, Copy)]
pub struct AgentInputs<'a> {
    pub graph: &'a SemanticGraph,
    pub ent_rows: &'a [usize],
    pub rel_rows: &'a [usize],
    pub start: usize,
}

impl AgentInputs<'_> {
    pub(crate) fn validate(&self, ent_table: &Array2<f64>, rel_table: &Array2<f64>) -> Result<()> {
        if self.ent_rows.len() != self.graph.entity_count()
            || self.rel_rows.len() != self.graph.relation_count()
        {
            return Err(CopathError::InvalidInput(format!(
                "embedding binding covers {}/{} ids but the graph has {}/{}",
                self.ent_rows.len(),
                self.rel_rows.len(),
                self.graph.entity_count(),
                self.graph.relation_count()
            )));
        }
        if let Some(&row) = self.ent_rows.iter().find(|&&r| r >= ent_table.nrows()) {
            return Err(CopathError::InvalidInput(format!(
                "entity row {row} is outside the embedding table ({} rows)",
                ent_table.nrows()
            )));
        }
        if let Some(&row) = self.rel_rows.iter().find(|&&r| r >= rel_table.nrows()) {
            return Err(CopathError::InvalidInput(format!(
                "relation row {row} is outside the embedding table ({} rows)",
                rel_table.nrows()
            )));
        }
        if self.start >= self.graph.entity_count() {
            return Err(CopathError::InvalidInput(format!(
                "start entity {} is outside the graph ({} entities)",
                self.start,
                self.graph.entity_count()
            )));
        }
        Ok(())
    }
}

/// Raw candidate scores for the edges leaving one node.
///
/// `candidates` holds (relation row, destination row) pairs into the
/// embedding tables. The linear scorer applies a single weight row to
/// `[h; E(entity); E(relation)]`; the bilinear one projects `[h; E(entity)]`
/// to a context vector and dots it with each candidate's feature embedding.
/// `current_row` is the row of the occupied entity.
pub fn edge_scores(
    h: &Array1<f64>,
    current_row: usize,
    candidates: &[(usize, usize)],
    ent_table: &Array2<f64>,
    rel_table: &Array2<f64>,
    w_a: &Array2<f64>,
    spec: ScorerSpec,
) -> Result<Vec<f64>> {
    if candidates.is_empty() {
        return Err(CopathError::InvalidInput(
            "cannot score an empty candidate set".into(),
        ));
    }
    let d = ent_table.ncols();
    if rel_table.ncols() != d {
        return Err(CopathError::InvalidInput(
            "entity and relation embeddings have different widths".into(),
        ));
    }
    let dh = h.len();
    let expected = match spec.kind {
        ScorerKind::Linear => (1, dh + 2 * d),
        ScorerKind::Bilinear => (d, dh + d),
    };
    if w_a.dim() != expected {
        return Err(CopathError::InvalidInput(format!(
            "scoring weights have shape {:?}, expected {:?}",
            w_a.dim(),
            expected
        )));
    }
    if current_row >= ent_table.nrows() {
        return Err(CopathError::InvalidInput(format!(
            "entity row {current_row} is outside the embedding table"
        )));
    }
    for &(rel_row, dst_row) in candidates {
        if rel_row >= rel_table.nrows() || dst_row >= ent_table.nrows() {
            return Err(CopathError::InvalidInput(format!(
                "candidate rows ({rel_row}, {dst_row}) are outside the embedding tables"
            )));
        }
    }

    let scores = match spec.kind {
        ScorerKind::Linear => {
            let row = w_a.row(0);
            let w_h = row.slice(ndarray::s![0..dh]);
            let w_e = row.slice(ndarray::s![dh..dh + d]);
            let w_r = row.slice(ndarray::s![dh + d..dh + 2 * d]);
            let h_term = w_h.dot(h);
            candidates
                .iter()
                .map(|&(rel_row, dst_row)| {
                    let ent_row = if spec.score_target { dst_row } else { current_row };
                    h_term + w_e.dot(&ent_table.row(ent_row)) + w_r.dot(&rel_table.row(rel_row))
                })
                .collect::<Vec<f64>>()
        }
        ScorerKind::Bilinear => {
            let joint = concatenate(Axis(0), &[h.view(), ent_table.row(current_row)])
                .expect("1-d concatenation cannot fail");
            let ctx = w_a.dot(&joint);
            candidates
                .iter()
                .map(|&(rel_row, dst_row)| {
                    let mut s = rel_table.row(rel_row).dot(&ctx);
                    if spec.score_target {
                        s += ent_table.row(dst_row).dot(&ctx);
                    }
                    s
                })
                .collect::<Vec<f64>>()
        }
    };
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(CopathError::Numeric(
            "non-finite candidate score".into(),
        ));
    }
    Ok(scores)
}

/// Softmax with max-subtraction. Every output is strictly positive and the
/// outputs sum to 1 up to rounding.
pub fn policy_distribution(scores: &[f64]) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(CopathError::InvalidInput(
            "cannot normalize an empty score vector".into(),
        ));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(CopathError::Numeric(
            "non-finite score in policy distribution".into(),
        ));
    }
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

/// One agent action: the node it acted from, the candidate edges it saw
/// (ascending edge ids, self-wait first), the chosen candidate index, and
/// the full distribution it chose from.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentStepRecord {
    pub src: usize,
    pub candidates: Vec<usize>,
    pub chosen: usize,
    pub probs: Vec<f64>,
    pub log_prob: f64,
}

impl AgentStepRecord {
    /// Global edge id of the chosen edge.
    pub fn chosen_edge(&self) -> usize {
        self.candidates[self.chosen]
    }
}

/// Recurrent updates recorded after one step, by wiring.
#[derive(Debug, Clone, Default)]
pub struct CommTraceStep {
    pub shared: Option<CommStepCache>,
    pub video: Option<CommStepCache>,
    pub context: Option<CommStepCache>,
}

/// A full episode: both agents' actions plus the recurrent caches needed
/// to run the episode backwards. `comm` has one entry per step except the
/// last.
#[derive(Debug, Clone)]
pub struct EpisodeTrace {
    pub steps_v: Option<Vec<AgentStepRecord>>,
    pub steps_u: Option<Vec<AgentStepRecord>>,
    pub comm: Vec<CommTraceStep>,
    pub log_prob: f64,
}

impl EpisodeTrace {
    pub fn horizon(&self) -> usize {
        self.steps_v
            .as_ref()
            .or(self.steps_u.as_ref())
            .map(|s| s.len())
            .unwrap_or(0)
    }
}

/// Which graph an agent walks. The video agent always acts first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Video,
    Context,
}

/// Table/parameter accessors for one side of the model.
struct SideCtx<'a> {
    ent_table: &'a Array2<f64>,
    rel_table: &'a Array2<f64>,
    w_a: &'a Array2<f64>,
}

fn side_ctx<'a>(params: &'a ModelParams, side: Side) -> SideCtx<'a> {
    match side {
        Side::Video => SideCtx {
            ent_table: &params.emb.ent_v,
            rel_table: &params.emb.rel_v,
            w_a: &params.agent_v.w_a,
        },
        Side::Context => SideCtx {
            ent_table: &params.emb.ent_u,
            rel_table: &params.emb.rel_u,
            w_a: &params.agent_u.w_a,
        },
    }
}

/// Global edge ids plus their (relation row, destination row) pairs.
type CandidateRows = (Vec<usize>, Vec<(usize, usize)>);

/// Candidate edges at `entity` as (global edge id, relation row,
/// destination row) triples, in adjacency order.
fn candidate_rows(inputs: &AgentInputs<'_>, entity: usize) -> Result<CandidateRows> {
    let edge_ids = inputs.graph.outgoing(entity)?.to_vec();
    let mut rows = Vec::with_capacity(edge_ids.len());
    for &id in &edge_ids {
        let edge = inputs.graph.edge(id)?;
        rows.push((inputs.rel_rows[edge.rel], inputs.ent_rows[edge.dst]));
    }
    Ok((edge_ids, rows))
}

/// Score and normalize the candidates one agent sees at `entity` under
/// recurrent state `h`.
fn agent_distribution(
    params: &ModelParams,
    side: Side,
    inputs: &AgentInputs<'_>,
    entity: usize,
    h: &Array1<f64>,
) -> Result<(Vec<usize>, Vec<f64>)> {
    let ctx = side_ctx(params, side);
    let (edge_ids, rows) = candidate_rows(inputs, entity)?;
    let scores = edge_scores(
        h,
        inputs.ent_rows[entity],
        &rows,
        ctx.ent_table,
        ctx.rel_table,
        ctx.w_a,
        params.scorer,
    )?;
    let probs = policy_distribution(&scores)?;
    Ok((edge_ids, probs))
}

/// First strict maximum: ties keep the lowest index.
pub fn greedy_index(probs: &[f64]) -> usize {
    let mut best = 0usize;
    let mut best_p = f64::NEG_INFINITY;
    for (i, &p) in probs.iter().enumerate() {
        if p > best_p {
            best_p = p;
            best = i;
        }
    }
    best
}

/// Inverse-CDF sampling: one uniform draw walks the cumulative
/// distribution.
fn sample_index(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let r: f64 = rng.gen::<f64>();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if r < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Zero embedding slots used for a disabled side of the shared
/// communicator input.
fn zero_pair(d: usize) -> (Array1<f64>, Array1<f64>) {
    (Array1::zeros(d), Array1::zeros(d))
}

/// The (relation, source entity) embedding pair an agent feeds to the
/// recurrent update after acting.
fn action_pair(
    params: &ModelParams,
    side: Side,
    inputs: &AgentInputs<'_>,
    record: &AgentStepRecord,
) -> Result<(Array1<f64>, Array1<f64>)> {
    let ctx = side_ctx(params, side);
    let edge = inputs.graph.edge(record.chosen_edge())?;
    let rel = ctx.rel_table.row(inputs.rel_rows[edge.rel]).to_owned();
    let ent = ctx.ent_table.row(inputs.ent_rows[record.src]).to_owned();
    Ok((rel, ent))
}

/// Run one episode. Disabled sides pass `None`; with the shared wiring
/// their communicator slots are zero. Sampling requires `rng`; the video
/// agent always draws before the context agent.
pub fn rollout_episode(
    params: &ModelParams,
    video: Option<&AgentInputs<'_>>,
    context: Option<&AgentInputs<'_>>,
    horizon: usize,
    mode: DecodeMode,
    mut rng: Option<&mut ChaCha8Rng>,
) -> Result<EpisodeTrace> {
    if mode == DecodeMode::Sample && rng.is_none() {
        return Err(CopathError::InvalidInput(
            "sampled decoding requires a random stream".into(),
        ));
    }
    run_episode_inner(params, video, context, horizon, &mut |_side, _step, probs| {
        Ok(match mode {
            DecodeMode::Greedy => greedy_index(probs),
            DecodeMode::Sample => {
                sample_index(probs, rng.as_deref_mut().expect("checked above"))
            }
        })
    })
}

/// Re-run an episode with a fixed action sequence (candidate indices per
/// step and side). The same parameters reproduce a recorded trace exactly;
/// perturbed parameters yield the action sequence's probabilities under
/// the perturbation.
pub fn replay_episode(
    params: &ModelParams,
    video: Option<&AgentInputs<'_>>,
    context: Option<&AgentInputs<'_>>,
    horizon: usize,
    actions_v: Option<&[usize]>,
    actions_u: Option<&[usize]>,
) -> Result<EpisodeTrace> {
    if video.is_some() != actions_v.is_some() || context.is_some() != actions_u.is_some() {
        return Err(CopathError::InvalidInput(
            "forced actions must cover exactly the active sides".into(),
        ));
    }
    for actions in [actions_v, actions_u].into_iter().flatten() {
        if actions.len() != horizon {
            return Err(CopathError::InvalidInput(format!(
                "forced action sequence has {} steps, expected {horizon}",
                actions.len()
            )));
        }
    }
    run_episode_inner(params, video, context, horizon, &mut |side, step, probs| {
        let forced = match side {
            Side::Video => actions_v.expect("validated above")[step],
            Side::Context => actions_u.expect("validated above")[step],
        };
        if forced >= probs.len() {
            return Err(CopathError::InvalidInput(format!(
                "forced action {forced} out of range for {} candidates",
                probs.len()
            )));
        }
        Ok(forced)
    })
}

/// Picks one candidate index given (side, step, distribution).
type ChooseFn<'a> = dyn FnMut(Side, usize, &[f64]) -> Result<usize> + 'a;

fn run_episode_inner(
    params: &ModelParams,
    video: Option<&AgentInputs<'_>>,
    context: Option<&AgentInputs<'_>>,
    horizon: usize,
    choose: &mut ChooseFn<'_>,
) -> Result<EpisodeTrace> {
    if horizon == 0 {
        return Err(CopathError::InvalidInput(
            "episode horizon must be at least 1".into(),
        ));
    }
    if video.is_none() && context.is_none() {
        return Err(CopathError::InvalidInput(
            "at least one agent must be active".into(),
        ));
    }
    if let Some(v) = video {
        v.validate(&params.emb.ent_v, &params.emb.rel_v)?;
    }
    if let Some(u) = context {
        u.validate(&params.emb.ent_u, &params.emb.rel_u)?;
    }

    let dh = params.dims.hidden;
    let mut shared_state = CommState::zeros(dh);
    let mut video_state = CommState::zeros(dh);
    let mut context_state = CommState::zeros(dh);

    let mut steps_v: Vec<AgentStepRecord> = Vec::new();
    let mut steps_u: Vec<AgentStepRecord> = Vec::new();
    let mut comm: Vec<CommTraceStep> = Vec::new();
    let mut cur_v = video.map(|v| v.start);
    let mut cur_u = context.map(|u| u.start);
    let mut log_prob = 0.0;

    for step in 0..horizon {
        for (side, inputs, cur, steps) in [
            (Side::Video, video, &mut cur_v, &mut steps_v),
            (Side::Context, context, &mut cur_u, &mut steps_u),
        ] {
            let Some(inputs) = inputs else { continue };
            let entity = cur.expect("active side always has a position");
            let h = match (&params.comm, side) {
                (CommWiring::Shared(_), _) => &shared_state.h,
                (CommWiring::Private { .. }, Side::Video) => &video_state.h,
                (CommWiring::Private { .. }, Side::Context) => &context_state.h,
            };
            let (candidates, probs) = agent_distribution(params, side, inputs, entity, h)?;
            let chosen = choose(side, step, &probs)?;
            let record = AgentStepRecord {
                src: entity,
                candidates,
                chosen,
                probs: probs.clone(),
                log_prob: probs[chosen].ln(),
            };
            log_prob += record.log_prob;
            *cur = Some(inputs.graph.edge(record.chosen_edge())?.dst);
            steps.push(record);
        }

        if step + 1 < horizon {
            let d = params.dims.embed;
            let mut trace_step = CommTraceStep::default();
            match &params.comm {
                CommWiring::Shared(p) => {
                    let (rel_v, ent_v) = match (video, steps_v.last()) {
                        (Some(inputs), Some(record)) => {
                            action_pair(params, Side::Video, inputs, record)?
                        }
                        _ => zero_pair(d),
                    };
                    let (rel_u, ent_u) = match (context, steps_u.last()) {
                        (Some(inputs), Some(record)) => {
                            action_pair(params, Side::Context, inputs, record)?
                        }
                        _ => zero_pair(d),
                    };
                    let x = comm_input(
                        &p.w_c,
                        &[rel_v.view(), ent_v.view(), rel_u.view(), ent_u.view()],
                    )?;
                    let (next, cache) = comm_step(&shared_state, &x, p)?;
                    shared_state = next;
                    trace_step.shared = Some(cache);
                }
                CommWiring::Private {
                    video: pv,
                    context: pu,
                } => {
                    if let (Some(inputs), Some(record)) = (video, steps_v.last()) {
                        let (rel, ent) = action_pair(params, Side::Video, inputs, record)?;
                        let x = comm_input(&pv.w_c, &[rel.view(), ent.view()])?;
                        let (next, cache) = comm_step(&video_state, &x, pv)?;
                        video_state = next;
                        trace_step.video = Some(cache);
                    }
                    if let (Some(inputs), Some(record)) = (context, steps_u.last()) {
                        let (rel, ent) = action_pair(params, Side::Context, inputs, record)?;
                        let x = comm_input(&pu.w_c, &[rel.view(), ent.view()])?;
                        let (next, cache) = comm_step(&context_state, &x, pu)?;
                        context_state = next;
                        trace_step.context = Some(cache);
                    }
                }
            }
            comm.push(trace_step);
        }
    }

    Ok(EpisodeTrace {
        steps_v: video.map(|_| steps_v),
        steps_u: context.map(|_| steps_u),
        comm,
        log_prob,
    })
}

/// Serialize a walk given as a sequence of edge ids: start entity surface
/// form, then each traversed relation and destination. Self-wait steps
/// contribute nothing.
pub fn serialize_edge_seq(graph: &SemanticGraph, start: usize, edges: &[usize]) -> Result<String> {
    let mut parts: Vec<String> = Vec::new();
    parts.push(graph.entity_tokens(start)?.join(" "));
    let mut cur = start;
    for &id in edges {
        let edge = graph.edge(id)?;
        if edge.src != cur {
            return Err(CopathError::InvalidInput(format!(
                "edge {id} starts at entity {} but the walk is at {cur}",
                edge.src
            )));
        }
        cur = edge.dst;
        if edge.rel == STAY_RELATION {
            continue;
        }
        parts.push(graph.relation_tokens(edge.rel)?.join(" "));
        parts.push(graph.entity_tokens(edge.dst)?.join(" "));
    }
    Ok(parts.join(" "))
}

/// Serialize a walked path from step records. See [`serialize_edge_seq`].
pub fn serialize_path(
    graph: &SemanticGraph,
    start: usize,
    steps: &[AgentStepRecord],
) -> Result<String> {
    let edges: Vec<usize> = steps.iter().map(|r| r.chosen_edge()).collect();
    serialize_edge_seq(graph, start, &edges)
}

/// The entities a step sequence visits, starting from `start`.
pub fn trace_entities(
    graph: &SemanticGraph,
    start: usize,
    steps: &[AgentStepRecord],
) -> Result<Vec<usize>> {
    let mut out = vec![start];
    for record in steps {
        out.push(graph.edge(record.chosen_edge())?.dst);
    }
    Ok(out)
}

#[derive(Clone)]
struct Hypothesis {
    steps_v: Vec<AgentStepRecord>,
    steps_u: Vec<AgentStepRecord>,
    comm: Vec<CommTraceStep>,
    shared_state: CommState,
    video_state: CommState,
    context_state: CommState,
    cur_v: Option<usize>,
    cur_u: Option<usize>,
    log_prob: f64,
}

/// Joint beam search over both agents' action sequences. Keeps the `width`
/// highest-scoring joint prefixes per step; ties break toward the earlier
/// hypothesis and lower candidate indices, so the result is deterministic.
/// One side's decoded distribution: (candidate edge ids, probabilities),
/// or `None` for an inactive side.
type SideDist = Option<(Vec<usize>, Vec<f64>)>;

pub fn beam_decode(
    params: &ModelParams,
    video: Option<&AgentInputs<'_>>,
    context: Option<&AgentInputs<'_>>,
    horizon: usize,
    width: usize,
) -> Result<EpisodeTrace> {
    if width == 0 {
        return Err(CopathError::InvalidInput(
            "beam width must be at least 1".into(),
        ));
    }
    if horizon == 0 {
        return Err(CopathError::InvalidInput(
            "episode horizon must be at least 1".into(),
        ));
    }
    if video.is_none() && context.is_none() {
        return Err(CopathError::InvalidInput(
            "at least one agent must be active".into(),
        ));
    }
    if let Some(v) = video {
        v.validate(&params.emb.ent_v, &params.emb.rel_v)?;
    }
    if let Some(u) = context {
        u.validate(&params.emb.ent_u, &params.emb.rel_u)?;
    }

    let dh = params.dims.hidden;
    let mut beam = vec![Hypothesis {
        steps_v: Vec::new(),
        steps_u: Vec::new(),
        comm: Vec::new(),
        shared_state: CommState::zeros(dh),
        video_state: CommState::zeros(dh),
        context_state: CommState::zeros(dh),
        cur_v: video.map(|v| v.start),
        cur_u: context.map(|u| u.start),
        log_prob: 0.0,
    }];

    for step in 0..horizon {
        // (hypothesis index, video candidate, context candidate, total log prob)
        let mut expansions: Vec<(usize, Option<usize>, Option<usize>, f64)> = Vec::new();
        let mut dists: Vec<(SideDist, SideDist)> = Vec::new();
        for (hi, hyp) in beam.iter().enumerate() {
            let dist_v = match video {
                Some(inputs) => {
                    let h = match &params.comm {
                        CommWiring::Shared(_) => &hyp.shared_state.h,
                        CommWiring::Private { .. } => &hyp.video_state.h,
                    };
                    Some(agent_distribution(
                        params,
                        Side::Video,
                        inputs,
                        hyp.cur_v.expect("active side has a position"),
                        h,
                    )?)
                }
                None => None,
            };
            let dist_u = match context {
                Some(inputs) => {
                    let h = match &params.comm {
                        CommWiring::Shared(_) => &hyp.shared_state.h,
                        CommWiring::Private { .. } => &hyp.context_state.h,
                    };
                    Some(agent_distribution(
                        params,
                        Side::Context,
                        inputs,
                        hyp.cur_u.expect("active side has a position"),
                        h,
                    )?)
                }
                None => None,
            };
            match (&dist_v, &dist_u) {
                (Some((_, pv)), Some((_, pu))) => {
                    for (i, p) in pv.iter().enumerate() {
                        for (j, q) in pu.iter().enumerate() {
                            expansions.push((
                                hi,
                                Some(i),
                                Some(j),
                                hyp.log_prob + p.ln() + q.ln(),
                            ));
                        }
                    }
                }
                (Some((_, pv)), None) => {
                    for (i, p) in pv.iter().enumerate() {
                        expansions.push((hi, Some(i), None, hyp.log_prob + p.ln()));
                    }
                }
                (None, Some((_, pu))) => {
                    for (j, q) in pu.iter().enumerate() {
                        expansions.push((hi, None, Some(j), hyp.log_prob + q.ln()));
                    }
                }
                (None, None) => unreachable!("at least one agent is active"),
            }
            dists.push((dist_v, dist_u));
        }

        expansions.sort_by(|a, b| {
            b.3.partial_cmp(&a.3)
                .expect("log probabilities are finite")
                .then(a.0.cmp(&b.0))
                .then(a.1.cmp(&b.1))
                .then(a.2.cmp(&b.2))
        });
        expansions.truncate(width);

        let mut next_beam = Vec::with_capacity(expansions.len());
        for (hi, ci, cj, lp) in expansions {
            let mut hyp = beam[hi].clone();
            hyp.log_prob = lp;
            if let Some(i) = ci {
                let (candidates, probs) = dists[hi].0.clone().expect("video distribution exists");
                let inputs = video.expect("video side active");
                let record = AgentStepRecord {
                    src: hyp.cur_v.expect("active side has a position"),
                    candidates,
                    chosen: i,
                    log_prob: probs[i].ln(),
                    probs,
                };
                hyp.cur_v = Some(inputs.graph.edge(record.chosen_edge())?.dst);
                hyp.steps_v.push(record);
            }
            if let Some(j) = cj {
                let (candidates, probs) = dists[hi].1.clone().expect("context distribution exists");
                let inputs = context.expect("context side active");
                let record = AgentStepRecord {
                    src: hyp.cur_u.expect("active side has a position"),
                    candidates,
                    chosen: j,
                    log_prob: probs[j].ln(),
                    probs,
                };
                hyp.cur_u = Some(inputs.graph.edge(record.chosen_edge())?.dst);
                hyp.steps_u.push(record);
            }

            if step + 1 < horizon {
                let d = params.dims.embed;
                let mut trace_step = CommTraceStep::default();
                match &params.comm {
                    CommWiring::Shared(p) => {
                        let (rel_v, ent_v) = match (video, hyp.steps_v.last()) {
                            (Some(inputs), Some(record)) => {
                                action_pair(params, Side::Video, inputs, record)?
                            }
                            _ => zero_pair(d),
                        };
                        let (rel_u, ent_u) = match (context, hyp.steps_u.last()) {
                            (Some(inputs), Some(record)) => {
                                action_pair(params, Side::Context, inputs, record)?
                            }
                            _ => zero_pair(d),
                        };
                        let x = comm_input(
                            &p.w_c,
                            &[rel_v.view(), ent_v.view(), rel_u.view(), ent_u.view()],
                        )?;
                        let (next, cache) = comm_step(&hyp.shared_state, &x, p)?;
                        hyp.shared_state = next;
                        trace_step.shared = Some(cache);
                    }
                    CommWiring::Private {
                        video: pv,
                        context: pu,
                    } => {
                        if let (Some(inputs), Some(record)) = (video, hyp.steps_v.last()) {
                            let (rel, ent) = action_pair(params, Side::Video, inputs, record)?;
                            let x = comm_input(&pv.w_c, &[rel.view(), ent.view()])?;
                            let (next, cache) = comm_step(&hyp.video_state, &x, pv)?;
                            hyp.video_state = next;
                            trace_step.video = Some(cache);
                        }
                        if let (Some(inputs), Some(record)) = (context, hyp.steps_u.last()) {
                            let (rel, ent) = action_pair(params, Side::Context, inputs, record)?;
                            let x = comm_input(&pu.w_c, &[rel.view(), ent.view()])?;
                            let (next, cache) = comm_step(&hyp.context_state, &x, pu)?;
                            hyp.context_state = next;
                            trace_step.context = Some(cache);
                        }
                    }
                }
                hyp.comm.push(trace_step);
            }
            next_beam.push(hyp);
        }
        beam = next_beam;
    }

    let best = beam.into_iter().next().expect("beam is never empty");
    Ok(EpisodeTrace {
        steps_v: video.map(|_| best.steps_v),
        steps_u: context.map(|_| best.steps_u),
        comm: best.comm,
        log_prob: best.log_prob,
    })
}
