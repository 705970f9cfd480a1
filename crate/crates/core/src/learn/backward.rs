//! Exact reverse-mode gradients for one episode.
//!
//! The surrogate objective for an episode with advantage `a` is
//! `L = -a · Σ ln p(chosen action)`, summed over both agents and all steps.
//! Each step's softmax sends `dL/dscore_j = -a(δ_j - p_j)` into the scoring
//! weights and the embeddings they touch, and into the recurrent state the
//! scores conditioned on. The recurrent part then runs backwards through
//! every communicator update, ending in the projection weights and the
//! action embeddings each update consumed.
//!
//! `episode_backward` must see the exact parameters that produced the
//! trace; the caches it replays store activations, not weights.

use ndarray::{concatenate, s, Array1, Array2, Axis};

use crate::comms::{CommParams, CommStepCache};
use crate::error::{CopathError, Result};
use crate::lexicon::EmbeddingSet;
use crate::model::{AgentParams, CommWiring, ModelParams, ScorerKind, ScorerSpec, TensorView};
use crate::policy::{AgentInputs, AgentStepRecord, EpisodeTrace, Side};

/// Gradient of `-advantage · log π(trace)` with respect to every parameter,
/// returned as a parameter-shaped container.
pub fn episode_backward(
    params: &ModelParams,
    video: Option<&AgentInputs<'_>>,
    context: Option<&AgentInputs<'_>>,
    trace: &EpisodeTrace,
    advantage: f64,
) -> Result<ModelParams> {
    if !advantage.is_finite() {
        return Err(CopathError::Numeric(format!(
            "advantage must be finite, got {advantage}"
        )));
    }
    if video.is_some() != trace.steps_v.is_some() || context.is_some() != trace.steps_u.is_some() {
        return Err(CopathError::InvalidInput(
            "trace sides do not match the provided agent inputs".into(),
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
    let t = trace.horizon();
    if t == 0 {
        return Err(CopathError::InvalidInput("trace has no steps".into()));
    }
    if trace.comm.len() + 1 != t {
        return Err(CopathError::InvalidInput(format!(
            "trace has {} recurrent updates for {t} steps, expected {}",
            trace.comm.len(),
            t - 1
        )));
    }
    for (inputs, steps, label) in [
        (video, trace.steps_v.as_ref(), "video"),
        (context, trace.steps_u.as_ref(), "context"),
    ] {
        let (Some(inputs), Some(steps)) = (inputs, steps) else {
            continue;
        };
        if steps.len() != t {
            return Err(CopathError::InvalidInput(format!(
                "{label} side has {} steps but the trace horizon is {t}",
                steps.len()
            )));
        }
        for (step, record) in steps.iter().enumerate() {
            if record.src >= inputs.graph.entity_count()
                || record.probs.len() != record.candidates.len()
                || record.chosen >= record.candidates.len()
            {
                return Err(CopathError::InvalidInput(format!(
                    "{label} step {step} is inconsistent with its graph"
                )));
            }
        }
    }

    let d = params.dims.embed;
    let dh = params.dims.hidden;
    let mut grads = params.zeros_like();
    {
        let ModelParams {
            emb: gemb,
            comm: gcomm,
            agent_v: gav,
            agent_u: gau,
            ..
        } = &mut grads;

        match (&params.comm, gcomm) {
            (CommWiring::Shared(p), CommWiring::Shared(gp)) => {
                let caches = extract_caches(trace, |step| step.shared.as_ref(), "shared")?;
                let mut dh_slots = vec![Array1::zeros(dh); t];
                for (side, inputs, steps) in [
                    (Side::Video, video, trace.steps_v.as_ref()),
                    (Side::Context, context, trace.steps_u.as_ref()),
                ] {
                    let (Some(inputs), Some(steps)) = (inputs, steps) else {
                        continue;
                    };
                    side_scoring(
                        side,
                        params,
                        inputs,
                        steps,
                        &caches,
                        advantage,
                        gemb,
                        gav,
                        gau,
                        &mut dh_slots,
                    )?;
                }
                let rows_v = match (video, trace.steps_v.as_ref()) {
                    (Some(inputs), Some(steps)) => Some(action_rows(inputs, steps, t - 1)?),
                    _ => None,
                };
                let rows_u = match (context, trace.steps_u.as_ref()) {
                    (Some(inputs), Some(steps)) => Some(action_rows(inputs, steps, t - 1)?),
                    _ => None,
                };
                let parts = |c: usize| {
                    vec![
                        rows_v.as_ref().map(|r| (TableSel::RelV, r[c].0)),
                        rows_v.as_ref().map(|r| (TableSel::EntV, r[c].1)),
                        rows_u.as_ref().map(|r| (TableSel::RelU, r[c].0)),
                        rows_u.as_ref().map(|r| (TableSel::EntU, r[c].1)),
                    ]
                };
                chain_backward(p, gp, &caches, dh_slots, &parts, &params.emb, gemb, d)?;
            }
            (
                CommWiring::Private {
                    video: pv,
                    context: pu,
                },
                CommWiring::Private {
                    video: gv,
                    context: gu,
                },
            ) => {
                if let (Some(inputs), Some(steps)) = (video, trace.steps_v.as_ref()) {
                    let caches = extract_caches(trace, |step| step.video.as_ref(), "video")?;
                    let mut dh_slots = vec![Array1::zeros(dh); t];
                    side_scoring(
                        Side::Video,
                        params,
                        inputs,
                        steps,
                        &caches,
                        advantage,
                        gemb,
                        gav,
                        gau,
                        &mut dh_slots,
                    )?;
                    let rows = action_rows(inputs, steps, t - 1)?;
                    let parts = |c: usize| {
                        vec![
                            Some((TableSel::RelV, rows[c].0)),
                            Some((TableSel::EntV, rows[c].1)),
                        ]
                    };
                    chain_backward(pv, gv, &caches, dh_slots, &parts, &params.emb, gemb, d)?;
                }
                if let (Some(inputs), Some(steps)) = (context, trace.steps_u.as_ref()) {
                    let caches = extract_caches(trace, |step| step.context.as_ref(), "context")?;
                    let mut dh_slots = vec![Array1::zeros(dh); t];
                    side_scoring(
                        Side::Context,
                        params,
                        inputs,
                        steps,
                        &caches,
                        advantage,
                        gemb,
                        gav,
                        gau,
                        &mut dh_slots,
                    )?;
                    let rows = action_rows(inputs, steps, t - 1)?;
                    let parts = |c: usize| {
                        vec![
                            Some((TableSel::RelU, rows[c].0)),
                            Some((TableSel::EntU, rows[c].1)),
                        ]
                    };
                    chain_backward(pu, gu, &caches, dh_slots, &parts, &params.emb, gemb, d)?;
                }
            }
            _ => unreachable!("gradient wiring mirrors the parameter wiring"),
        }
    }

    for (name, view) in grads.tensors() {
        let bad = match view {
            TensorView::M(m) => m.iter().any(|v| !v.is_finite()),
            TensorView::V(v) => v.iter().any(|x| !x.is_finite()),
        };
        if bad {
            return Err(CopathError::Numeric(format!(
                "non-finite gradient in {name}"
            )));
        }
    }
    Ok(grads)
}

/// Which of the four embedding tables a concat slot reads from.
#[derive(Clone, Copy)]
enum TableSel {
    EntV,
    RelV,
    EntU,
    RelU,
}

fn table(emb: &EmbeddingSet, sel: TableSel) -> &Array2<f64> {
    match sel {
        TableSel::EntV => &emb.ent_v,
        TableSel::RelV => &emb.rel_v,
        TableSel::EntU => &emb.ent_u,
        TableSel::RelU => &emb.rel_u,
    }
}

fn table_mut(emb: &mut EmbeddingSet, sel: TableSel) -> &mut Array2<f64> {
    match sel {
        TableSel::EntV => &mut emb.ent_v,
        TableSel::RelV => &mut emb.rel_v,
        TableSel::EntU => &mut emb.ent_u,
        TableSel::RelU => &mut emb.rel_u,
    }
}

fn extract_caches<'a>(
    trace: &'a EpisodeTrace,
    pick: impl Fn(&'a crate::policy::CommTraceStep) -> Option<&'a CommStepCache>,
    label: &str,
) -> Result<Vec<&'a CommStepCache>> {
    trace
        .comm
        .iter()
        .enumerate()
        .map(|(c, step)| {
            pick(step).ok_or_else(|| {
                CopathError::InvalidInput(format!(
                    "trace is missing the {label} recurrent cache at update {c}"
                ))
            })
        })
        .collect()
}

/// Hidden state the policies at step `s` conditioned on: zeros at the
/// first step, `o ∘ tanh(c)` of the previous update afterwards.
fn h_for(caches: &[&CommStepCache], s: usize, dh: usize) -> Array1<f64> {
    if s == 0 {
        Array1::zeros(dh)
    } else {
        let cache = caches[s - 1];
        &cache.o * &cache.tanh_c_new
    }
}

/// The embedding rows one side's action at each step fed into the
/// communicator: (relation row, source-entity row), for steps `0..count`.
fn action_rows(
    inputs: &AgentInputs<'_>,
    steps: &[AgentStepRecord],
    count: usize,
) -> Result<Vec<(usize, usize)>> {
    steps[..count]
        .iter()
        .map(|record| {
            let edge = inputs.graph.edge(record.chosen_edge())?;
            Ok((inputs.rel_rows[edge.rel], inputs.ent_rows[record.src]))
        })
        .collect()
}

fn outer_add(target: &mut Array2<f64>, a: &Array1<f64>, b: &Array1<f64>) {
    for (i, &ai) in a.iter().enumerate() {
        if ai == 0.0 {
            continue;
        }
        let mut row = target.row_mut(i);
        for (j, &bj) in b.iter().enumerate() {
            row[j] += ai * bj;
        }
    }
}

/// Backward through all scoring done by one side, accumulating embedding
/// and scorer gradients and the per-step hidden-state gradients.
#[allow(clippy::too_many_arguments)]
fn side_scoring(
    side: Side,
    params: &ModelParams,
    inputs: &AgentInputs<'_>,
    steps: &[AgentStepRecord],
    caches: &[&CommStepCache],
    advantage: f64,
    gemb: &mut EmbeddingSet,
    gav: &mut AgentParams,
    gau: &mut AgentParams,
    dh_slots: &mut [Array1<f64>],
) -> Result<()> {
    let dh = params.dims.hidden;
    for (s, record) in steps.iter().enumerate() {
        let h = h_for(caches, s, dh);
        match side {
            Side::Video => scoring_backward(
                record,
                inputs,
                &h,
                &params.emb.ent_v,
                &params.emb.rel_v,
                &params.agent_v.w_a,
                params.scorer,
                advantage,
                &mut gemb.ent_v,
                &mut gemb.rel_v,
                &mut gav.w_a,
                &mut dh_slots[s],
            )?,
            Side::Context => scoring_backward(
                record,
                inputs,
                &h,
                &params.emb.ent_u,
                &params.emb.rel_u,
                &params.agent_u.w_a,
                params.scorer,
                advantage,
                &mut gemb.ent_u,
                &mut gemb.rel_u,
                &mut gau.w_a,
                &mut dh_slots[s],
            )?,
        }
    }
    Ok(())
}

/// Backward through one softmax action: candidate score errors
/// `-a(δ_j - p_j)` pushed into the scorer weights, the touched embedding
/// rows, and the hidden state.
#[allow(clippy::too_many_arguments)]
fn scoring_backward(
    record: &AgentStepRecord,
    inputs: &AgentInputs<'_>,
    h: &Array1<f64>,
    ent_table: &Array2<f64>,
    rel_table: &Array2<f64>,
    w_a: &Array2<f64>,
    spec: ScorerSpec,
    advantage: f64,
    gent: &mut Array2<f64>,
    grel: &mut Array2<f64>,
    gw_a: &mut Array2<f64>,
    dh_out: &mut Array1<f64>,
) -> Result<()> {
    let d = ent_table.ncols();
    let dh = h.len();
    let cur_row = inputs.ent_rows[record.src];
    let mut rows = Vec::with_capacity(record.candidates.len());
    for &edge_id in &record.candidates {
        let edge = inputs.graph.edge(edge_id)?;
        rows.push((inputs.rel_rows[edge.rel], inputs.ent_rows[edge.dst]));
    }
    let errs: Vec<f64> = record
        .probs
        .iter()
        .enumerate()
        .map(|(j, &p)| {
            let indicator = if j == record.chosen { 1.0 } else { 0.0 };
            -advantage * (indicator - p)
        })
        .collect();

    match spec.kind {
        ScorerKind::Linear => {
            let w_row = w_a.row(0);
            let w_e = w_row.slice(s![dh..dh + d]);
            let w_r = w_row.slice(s![dh + d..dh + 2 * d]);
            let err_sum: f64 = errs.iter().sum();
            gw_a.row_mut(0)
                .slice_mut(s![0..dh])
                .scaled_add(err_sum, h);
            dh_out.scaled_add(err_sum, &w_row.slice(s![0..dh]));
            for (&(rel_row, dst_row), &err) in rows.iter().zip(&errs) {
                let ent_row = if spec.score_target { dst_row } else { cur_row };
                gw_a.row_mut(0)
                    .slice_mut(s![dh..dh + d])
                    .scaled_add(err, &ent_table.row(ent_row));
                gent.row_mut(ent_row).scaled_add(err, &w_e);
                gw_a.row_mut(0)
                    .slice_mut(s![dh + d..dh + 2 * d])
                    .scaled_add(err, &rel_table.row(rel_row));
                grel.row_mut(rel_row).scaled_add(err, &w_r);
            }
        }
        ScorerKind::Bilinear => {
            let joint = concatenate(Axis(0), &[h.view(), ent_table.row(cur_row)])
                .expect("1-d concatenation cannot fail");
            let ctx = w_a.dot(&joint);
            let mut dctx = Array1::<f64>::zeros(d);
            for (&(rel_row, dst_row), &err) in rows.iter().zip(&errs) {
                grel.row_mut(rel_row).scaled_add(err, &ctx);
                dctx.scaled_add(err, &rel_table.row(rel_row));
                if spec.score_target {
                    gent.row_mut(dst_row).scaled_add(err, &ctx);
                    dctx.scaled_add(err, &ent_table.row(dst_row));
                }
            }
            outer_add(gw_a, &dctx, &joint);
            let djoint = w_a.t().dot(&dctx);
            dh_out.scaled_add(1.0, &djoint.slice(s![0..dh]));
            gent.row_mut(cur_row)
                .scaled_add(1.0, &djoint.slice(s![dh..dh + d]));
        }
    }
    Ok(())
}

/// One LSTM step backwards: given gradients on the new hidden and cell
/// state, accumulate gate-weight gradients and return (dx, dh_prev,
/// dc_prev).
fn cell_backward(
    p: &CommParams,
    g: &mut CommParams,
    cache: &CommStepCache,
    dh_new: &Array1<f64>,
    dc_new: &Array1<f64>,
) -> (Array1<f64>, Array1<f64>, Array1<f64>) {
    let n = dh_new.len();
    let mut da_i = Array1::<f64>::zeros(n);
    let mut da_f = Array1::<f64>::zeros(n);
    let mut da_o = Array1::<f64>::zeros(n);
    let mut da_g = Array1::<f64>::zeros(n);
    let mut dc_prev = Array1::<f64>::zeros(n);
    for k in 0..n {
        let tanh_c = cache.tanh_c_new[k];
        let i = cache.i[k];
        let f = cache.f[k];
        let o = cache.o[k];
        let gk = cache.g[k];
        let d_o = dh_new[k] * tanh_c;
        let dc = dc_new[k] + dh_new[k] * o * (1.0 - tanh_c * tanh_c);
        let d_i = dc * gk;
        let d_g = dc * i;
        let d_f = dc * cache.c_prev[k];
        dc_prev[k] = dc * f;
        da_i[k] = d_i * i * (1.0 - i);
        da_f[k] = d_f * f * (1.0 - f);
        da_o[k] = d_o * o * (1.0 - o);
        da_g[k] = d_g * (1.0 - gk * gk);
    }
    let z = &cache.z;
    outer_add(&mut g.w_i, &da_i, z);
    g.b_i += &da_i;
    outer_add(&mut g.w_f, &da_f, z);
    g.b_f += &da_f;
    outer_add(&mut g.w_o, &da_o, z);
    g.b_o += &da_o;
    outer_add(&mut g.w_g, &da_g, z);
    g.b_g += &da_g;
    let dz = p.w_i.t().dot(&da_i)
        + p.w_f.t().dot(&da_f)
        + p.w_o.t().dot(&da_o)
        + p.w_g.t().dot(&da_g);
    let d_in = p.d_in();
    let dx = dz.slice(s![0..d_in]).to_owned();
    let dh_prev = dz.slice(s![d_in..]).to_owned();
    (dx, dh_prev, dc_prev)
}

/// Backward through one recurrent chain, newest update first. `parts`
/// names the embedding rows each update's projected concatenation read,
/// slot by slot; `None` slots were zero-padded in the forward pass and
/// absorb no gradient.
#[allow(clippy::too_many_arguments)]
fn chain_backward(
    p: &CommParams,
    gp: &mut CommParams,
    caches: &[&CommStepCache],
    mut dh_scoring: Vec<Array1<f64>>,
    parts: &dyn Fn(usize) -> Vec<Option<(TableSel, usize)>>,
    emb: &EmbeddingSet,
    gemb: &mut EmbeddingSet,
    d: usize,
) -> Result<()> {
    let t = dh_scoring.len();
    let dh_len = p.d_h();
    let mut dh_next = std::mem::replace(&mut dh_scoring[t - 1], Array1::zeros(0));
    let mut dc_next = Array1::<f64>::zeros(dh_len);
    for c in (0..t - 1).rev() {
        let (dx, dh_prev, dc_prev) = cell_backward(p, gp, caches[c], &dh_next, &dc_next);
        let step_parts = parts(c);
        if step_parts.len() * d != p.concat_dim() {
            return Err(CopathError::InvalidInput(format!(
                "recurrent update {c} reads {} slots of width {d} but the projection takes {}",
                step_parts.len(),
                p.concat_dim()
            )));
        }
        let mut q = Array1::<f64>::zeros(p.concat_dim());
        for (slot, part) in step_parts.iter().enumerate() {
            if let Some((sel, row)) = part {
                q.slice_mut(s![slot * d..(slot + 1) * d])
                    .assign(&table(emb, *sel).row(*row));
            }
        }
        outer_add(&mut gp.w_c, &dx, &q);
        let dq = p.w_c.t().dot(&dx);
        for (slot, part) in step_parts.iter().enumerate() {
            if let Some((sel, row)) = part {
                table_mut(gemb, *sel)
                    .row_mut(*row)
                    .scaled_add(1.0, &dq.slice(s![slot * d..(slot + 1) * d]));
            }
        }
        dh_next = &dh_scoring[c] + &dh_prev;
        dc_next = dc_prev;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Binding, DatasetVocab, TaskInstance};
    use crate::lexicon::WordVectors;
    use crate::model::{Dims, InitSpec, WiringKind};
    use crate::policy::{replay_episode, rollout_episode, DecodeMode};
    use crate::seeding::rng_from;
    use crate::synth::{gen_task, SynthConfig};

    fn fd_setup(
        horizon: usize,
        wiring: WiringKind,
        scorer: ScorerSpec,
        seed: u64,
    ) -> (ModelParams, TaskInstance, Binding) {
        let cfg = SynthConfig {
            nodes: 6,
            branching: 2,
            horizon,
        };
        let instance = gen_task(&cfg, seed).unwrap();
        let vocab = DatasetVocab::from_instances(std::slice::from_ref(&instance));
        let binding = vocab.bind(&instance).unwrap();
        let vectors = WordVectors::from_entries(vec![]).unwrap();
        let params = init_model(&InitSpec {
            entities_v: vocab.ent_v.names(),
            relations_v: vocab.rel_v.names(),
            entities_u: vocab.ent_u.names(),
            relations_u: vocab.rel_u.names(),
            vectors: &vectors,
            dims: Dims {
                embed: 3,
                hidden: 3,
                comm_input: 3,
            },
            init_scale: 0.1,
            embed_noise: 0.05,
            seed,
            wiring,
            scorer,
        })
        .unwrap();
        (params, instance, binding)
    }

    use crate::model::init_model;

    fn inputs<'a>(
        instance: &'a TaskInstance,
        binding: &'a Binding,
        side: Side,
        start: usize,
    ) -> AgentInputs<'a> {
        match side {
            Side::Video => AgentInputs {
                graph: &instance.graph_v,
                ent_rows: &binding.ent_v,
                rel_rows: &binding.rel_v,
                start,
            },
            Side::Context => AgentInputs {
                graph: &instance.graph_u,
                ent_rows: &binding.ent_u,
                rel_rows: &binding.rel_u,
                start,
            },
        }
    }

    /// Sample one episode, run the analytic backward pass, and compare
    /// every coordinate against a central difference of the replayed
    /// surrogate loss.
    fn check_gradients(
        params: &ModelParams,
        video: Option<&AgentInputs<'_>>,
        context: Option<&AgentInputs<'_>>,
        horizon: usize,
        seed: u64,
    ) {
        let advantage = 0.7;
        let mut rng = rng_from(seed);
        let trace = rollout_episode(
            params,
            video,
            context,
            horizon,
            DecodeMode::Sample,
            Some(&mut rng),
        )
        .unwrap();
        let actions_v: Option<Vec<usize>> = trace
            .steps_v
            .as_ref()
            .map(|steps| steps.iter().map(|r| r.chosen).collect());
        let actions_u: Option<Vec<usize>> = trace
            .steps_u
            .as_ref()
            .map(|steps| steps.iter().map(|r| r.chosen).collect());
        let grads = episode_backward(params, video, context, &trace, advantage).unwrap();
        let analytic = grads.flatten();
        let base = params.flatten();
        let mut probe = params.clone();
        let step = 1e-5;
        let loss_at = |flat: &[f64], probe: &mut ModelParams| -> f64 {
            probe.assign_from_flat(flat).unwrap();
            let replayed = replay_episode(
                probe,
                video,
                context,
                horizon,
                actions_v.as_deref(),
                actions_u.as_deref(),
            )
            .unwrap();
            -advantage * replayed.log_prob
        };
        for idx in 0..base.len() {
            let mut flat = base.clone();
            flat[idx] = base[idx] + step;
            let up = loss_at(&flat, &mut probe);
            flat[idx] = base[idx] - step;
            let down = loss_at(&flat, &mut probe);
            let fd = (up - down) / (2.0 * step);
            let g = analytic[idx];
            let err = (g - fd).abs();
            let tol = 1e-7_f64.max(1e-4 * g.abs().max(fd.abs()));
            assert!(
                err <= tol,
                "coordinate {idx}: analytic {g} vs central difference {fd} (err {err} > tol {tol})"
            );
        }
    }

    #[test]
    fn gradients_match_central_differences_linear_shared() {
        let spec = ScorerSpec {
            kind: ScorerKind::Linear,
            score_target: false,
        };
        let (params, instance, binding) = fd_setup(2, WiringKind::Shared, spec, 3);
        let iv = inputs(&instance, &binding, Side::Video, 0);
        let iu = inputs(&instance, &binding, Side::Context, 0);
        check_gradients(&params, Some(&iv), Some(&iu), 2, 41);
    }

    #[test]
    fn gradients_match_central_differences_linear_score_target_shared() {
        let spec = ScorerSpec {
            kind: ScorerKind::Linear,
            score_target: true,
        };
        let (params, instance, binding) = fd_setup(2, WiringKind::Shared, spec, 5);
        let iv = inputs(&instance, &binding, Side::Video, 1);
        let iu = inputs(&instance, &binding, Side::Context, 1);
        check_gradients(&params, Some(&iv), Some(&iu), 2, 43);
    }

    #[test]
    fn gradients_match_central_differences_bilinear_shared_deep() {
        let spec = ScorerSpec {
            kind: ScorerKind::Bilinear,
            score_target: false,
        };
        let (params, instance, binding) = fd_setup(3, WiringKind::Shared, spec, 7);
        let iv = inputs(&instance, &binding, Side::Video, 0);
        let iu = inputs(&instance, &binding, Side::Context, 2);
        check_gradients(&params, Some(&iv), Some(&iu), 3, 47);
    }

    #[test]
    fn gradients_match_central_differences_bilinear_score_target_deepest() {
        let spec = ScorerSpec {
            kind: ScorerKind::Bilinear,
            score_target: true,
        };
        let (params, instance, binding) = fd_setup(4, WiringKind::Shared, spec, 11);
        let iv = inputs(&instance, &binding, Side::Video, 3);
        let iu = inputs(&instance, &binding, Side::Context, 0);
        check_gradients(&params, Some(&iv), Some(&iu), 4, 53);
    }

    #[test]
    fn gradients_match_central_differences_bilinear_private() {
        let spec = ScorerSpec {
            kind: ScorerKind::Bilinear,
            score_target: false,
        };
        let (params, instance, binding) = fd_setup(3, WiringKind::Private, spec, 13);
        let iv = inputs(&instance, &binding, Side::Video, 0);
        let iu = inputs(&instance, &binding, Side::Context, 0);
        check_gradients(&params, Some(&iv), Some(&iu), 3, 59);
    }

    #[test]
    fn gradients_match_central_differences_video_only_shared() {
        // One-sided episode under the shared wiring: the context slots of
        // the recurrent input stay zero and absorb no gradient.
        let spec = ScorerSpec {
            kind: ScorerKind::Bilinear,
            score_target: false,
        };
        let (params, instance, binding) = fd_setup(3, WiringKind::Shared, spec, 17);
        let iv = inputs(&instance, &binding, Side::Video, 0);
        check_gradients(&params, Some(&iv), None, 3, 61);
    }

    #[test]
    fn gradients_match_central_differences_context_only_private() {
        let spec = ScorerSpec {
            kind: ScorerKind::Linear,
            score_target: true,
        };
        let (params, instance, binding) = fd_setup(2, WiringKind::Private, spec, 19);
        let iu = inputs(&instance, &binding, Side::Context, 0);
        check_gradients(&params, None, Some(&iu), 2, 67);
    }

    #[test]
    fn linear_source_scoring_cannot_move_the_recurrent_state() {
        // With the linear scorer over the source entity, the hidden-state
        // and entity terms add the same constant to every candidate score,
        // so the softmax ignores them: their gradients cancel analytically
        // and only floating-point residue (≤ 1e-12) remains.
        let spec = ScorerSpec {
            kind: ScorerKind::Linear,
            score_target: false,
        };
        let (params, instance, binding) = fd_setup(3, WiringKind::Shared, spec, 23);
        let iv = inputs(&instance, &binding, Side::Video, 0);
        let iu = inputs(&instance, &binding, Side::Context, 0);
        let mut rng = rng_from(71);
        let trace = rollout_episode(
            &params,
            Some(&iv),
            Some(&iu),
            3,
            DecodeMode::Sample,
            Some(&mut rng),
        )
        .unwrap();
        let grads = episode_backward(&params, Some(&iv), Some(&iu), &trace, 1.0).unwrap();
        let dh = params.dims.hidden;
        for (name, view) in grads.tensors() {
            let near_zero = |m: &[f64]| m.iter().all(|v| v.abs() <= 1e-12);
            if name.starts_with("comm.") || name.starts_with("emb.ent_") {
                let ok = match view {
                    TensorView::M(m) => near_zero(m.as_slice().unwrap()),
                    TensorView::V(v) => near_zero(v.as_slice().unwrap()),
                };
                assert!(ok, "{name} should carry no gradient");
            }
        }
        for w_a in [&grads.agent_v.w_a, &grads.agent_u.w_a] {
            let head = w_a.row(0);
            assert!(
                head.slice(s![0..dh]).iter().all(|v| v.abs() <= 1e-12),
                "hidden-state slice of the scorer should carry no gradient"
            );
            assert!(
                head.slice(s![dh..dh + params.dims.embed])
                    .iter()
                    .all(|v| v.abs() <= 1e-12),
                "source-entity slice of the scorer should carry no gradient"
            );
            assert!(
                head.slice(s![dh + params.dims.embed..])
                    .iter()
                    .any(|v| v.abs() > 1e-12),
                "relation slice of the scorer should carry gradient"
            );
        }
    }

    #[test]
    fn gradients_scale_linearly_with_the_advantage() {
        let spec = ScorerSpec {
            kind: ScorerKind::Bilinear,
            score_target: false,
        };
        let (params, instance, binding) = fd_setup(2, WiringKind::Shared, spec, 29);
        let iv = inputs(&instance, &binding, Side::Video, 0);
        let iu = inputs(&instance, &binding, Side::Context, 0);
        let mut rng = rng_from(73);
        let trace = rollout_episode(
            &params,
            Some(&iv),
            Some(&iu),
            2,
            DecodeMode::Sample,
            Some(&mut rng),
        )
        .unwrap();
        let single = episode_backward(&params, Some(&iv), Some(&iu), &trace, 0.3).unwrap();
        let double = episode_backward(&params, Some(&iv), Some(&iu), &trace, 0.6).unwrap();
        // Doubling the advantage is an exact power-of-two scaling of every
        // term, so the flattened gradients match exactly.
        let flat_s = single.flatten();
        let flat_d = double.flatten();
        for (a, b) in flat_s.iter().zip(&flat_d) {
            assert_eq!(2.0 * a, *b);
        }
        let zero = episode_backward(&params, Some(&iv), Some(&iu), &trace, 0.0).unwrap();
        assert!(zero.flatten().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn mismatched_sides_and_bad_advantages_are_rejected() {
        let spec = ScorerSpec {
            kind: ScorerKind::Linear,
            score_target: false,
        };
        let (params, instance, binding) = fd_setup(2, WiringKind::Shared, spec, 31);
        let iv = inputs(&instance, &binding, Side::Video, 0);
        let iu = inputs(&instance, &binding, Side::Context, 0);
        let trace =
            rollout_episode(&params, Some(&iv), Some(&iu), 2, DecodeMode::Greedy, None).unwrap();
        // Trace carries both sides but only one input is offered.
        assert!(episode_backward(&params, Some(&iv), None, &trace, 1.0).is_err());
        assert!(episode_backward(&params, Some(&iv), Some(&iu), &trace, f64::NAN).is_err());
    }
}
