//! Synthetic task generation with exact oracles.
//!
//! Two families:
//!
//! * [`gen_task`] plants one labeled walk per graph. Planted edges draw
//!   labels from a small "planted" pool, every distractor edge from a
//!   disjoint pool, so the planted walk is the unique reward-1 walk per
//!   side and the task is solvable by relation preference alone.
//! * [`gen_coordination_task`] builds a fixed branching structure where
//!   each agent's correct branch is determined by the *other* agent's
//!   start, so no pair of independent policies can reach the oracle
//!   reward on average.
//!
//! Both generators verify at build time that the best enumerable walk pair
//! scores exactly 2.

use rand::seq::index::sample;
use rand::Rng;

use crate::dataset::{PlantedPath, TaskInstance};
use crate::error::{CopathError, Result};
use crate::lexicon::WordVectors;
use crate::policy::serialize_edge_seq;
use crate::reward::{best_rouge1, Reference, RougeVariant};
use crate::seeding;
use crate::semgraph::{
    build_graph, surface_form, SemanticGraph, TripletRecord, STAY_RELATION_NAME,
};

/// Walk-count ceiling for exhaustive enumeration.
pub const DEFAULT_WALK_BOUND: usize = 1_000_000;

/// Shape of a planted-walk task.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthConfig {
    /// Entities per graph.
    pub nodes: usize,
    /// Non-wait out-edges per planted node (1 planted + the rest
    /// distractors).
    pub branching: usize,
    /// Planted walk length in moves.
    pub horizon: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            nodes: 30,
            branching: 3,
            horizon: 2,
        }
    }
}

/// Number of distinct planted-pool relation labels per side.
pub const PLANTED_LABELS: usize = 4;
/// Number of distinct distractor-pool relation labels per side.
pub const DISTRACTOR_LABELS: usize = 6;

fn side_prefix(video: bool) -> char {
    if video {
        'v'
    } else {
        'u'
    }
}

/// One side of a planted-walk instance: triplet records plus the planted
/// walk as (entity name, relation name) traces.
struct PlantedSide {
    records: Vec<TripletRecord>,
    walk_entities: Vec<String>,
    walk_relations: Vec<String>,
}

fn gen_planted_side(
    cfg: &SynthConfig,
    video: bool,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> PlantedSide {
    let side = side_prefix(video);
    let node_name = |i: usize| format!("{side}{i}");
    let planted_label = |i: usize| format!("p{side}{i}");
    let distractor_label = |i: usize| format!("q{side}{i}");

    // The planted walk visits horizon+1 distinct nodes.
    let walk_nodes: Vec<usize> = sample(rng, cfg.nodes, cfg.horizon + 1).into_vec();
    let walk_entities: Vec<String> = walk_nodes.iter().map(|&i| node_name(i)).collect();
    let mut walk_relations = Vec::with_capacity(cfg.horizon);

    let mut records = Vec::new();
    for step in 0..cfg.horizon {
        let label = planted_label(rng.gen_range(0..PLANTED_LABELS));
        records.push(TripletRecord::new(
            &walk_entities[step],
            &label,
            &walk_entities[step + 1],
            None,
        ));
        walk_relations.push(label);
    }

    // Distractor edges: branching-1 per planted node, all with labels from
    // the disjoint pool.
    let random_target = |src: usize, rng: &mut rand_chacha::ChaCha8Rng| {
        let t = rng.gen_range(0..cfg.nodes - 1);
        if t >= src {
            t + 1
        } else {
            t
        }
    };
    for &node in &walk_nodes {
        for _ in 0..cfg.branching.saturating_sub(1) {
            let label = distractor_label(rng.gen_range(0..DISTRACTOR_LABELS));
            let target = random_target(node, rng);
            records.push(TripletRecord::new(
                &node_name(node),
                &label,
                &node_name(target),
                None,
            ));
        }
    }
    // Every off-walk node gets one distractor edge so the whole node set
    // exists and no node is a dead end.
    for node in 0..cfg.nodes {
        if walk_nodes.contains(&node) {
            continue;
        }
        let label = distractor_label(rng.gen_range(0..DISTRACTOR_LABELS));
        let target = random_target(node, rng);
        records.push(TripletRecord::new(
            &node_name(node),
            &label,
            &node_name(target),
            None,
        ));
    }

    PlantedSide {
        records,
        walk_entities,
        walk_relations,
    }
}

/// Resolve a (entity names, relation names) walk against a built graph.
fn resolve_planted(
    graph: &SemanticGraph,
    entities: &[String],
    relations: &[String],
) -> Result<PlantedPath> {
    let entity_ids: Vec<usize> = entities
        .iter()
        .map(|name| {
            graph.entity_id(name).ok_or_else(|| {
                CopathError::InvalidInput(format!("planted entity '{name}' missing from graph"))
            })
        })
        .collect::<Result<_>>()?;
    let relation_ids: Vec<usize> = relations
        .iter()
        .map(|name| {
            graph.relation_id(name).ok_or_else(|| {
                CopathError::InvalidInput(format!("planted relation '{name}' missing from graph"))
            })
        })
        .collect::<Result<_>>()?;
    let mut tokens: Vec<String> = vec![entities[0].clone()];
    for (rel, ent) in relations.iter().zip(entities.iter().skip(1)) {
        tokens.push(rel.clone());
        tokens.push(ent.clone());
    }
    Ok(PlantedPath {
        entities: entity_ids,
        relations: relation_ids,
        serialized: tokens.join(" "),
    })
}

/// Generate one planted-walk instance. The utterance names both start
/// entities; the references are exactly the serialized planted walks, so
/// the oracle reward is 2 (verified here by enumeration).
pub fn gen_task(cfg: &SynthConfig, seed: u64) -> Result<TaskInstance> {
    if cfg.horizon == 0 {
        return Err(CopathError::InvalidInput(
            "planted walks need at least one move".into(),
        ));
    }
    if cfg.nodes < cfg.horizon + 1 {
        return Err(CopathError::InvalidInput(format!(
            "{} nodes cannot host a walk over {} distinct entities",
            cfg.nodes,
            cfg.horizon + 1
        )));
    }
    if cfg.branching == 0 {
        return Err(CopathError::InvalidInput(
            "branching must be at least 1".into(),
        ));
    }

    let mut rng = seeding::rng_from(seed);
    let side_v = gen_planted_side(cfg, true, &mut rng);
    let side_u = gen_planted_side(cfg, false, &mut rng);
    let graph_v = build_graph(&side_v.records)?;
    let graph_u = build_graph(&side_u.records)?;
    let planted_v = resolve_planted(&graph_v, &side_v.walk_entities, &side_v.walk_relations)?;
    let planted_u = resolve_planted(&graph_u, &side_u.walk_entities, &side_u.walk_relations)?;

    let instance = TaskInstance {
        seed,
        utterance: vec![
            side_v.walk_entities[0].clone(),
            side_u.walk_entities[0].clone(),
        ],
        reference: Reference {
            video: vec![planted_v.serialized.clone()],
            context: vec![planted_u.serialized.clone()],
        },
        graph_v,
        graph_u,
        planted_v: Some(planted_v),
        planted_u: Some(planted_u),
    };

    let oracle = brute_force_oracle(&instance, cfg.horizon, RougeVariant::F1, DEFAULT_WALK_BOUND)?;
    if oracle.best_v != 1.0 || oracle.best_u != 1.0 {
        return Err(CopathError::Numeric(format!(
            "generated instance is not exactly solvable: oracle ({}, {})",
            oracle.best_v, oracle.best_u
        )));
    }
    Ok(instance)
}

/// Generate `count` instances with per-instance seeds derived from
/// `base_seed`.
pub fn gen_tasks(cfg: &SynthConfig, base_seed: u64, count: usize) -> Result<Vec<TaskInstance>> {
    (0..count)
        .map(|i| gen_task(cfg, seeding::mix(base_seed, i as u64)))
        .collect()
}

/// Shape of a coordination task. The walk structure is fixed at three
/// moves: start, forced hop to the shared midpoint, branch choice, forced
/// tail hop. `starts` is the number of start/branch options per side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoordinationConfig {
    pub starts: usize,
}

impl Default for CoordinationConfig {
    fn default() -> Self {
        CoordinationConfig { starts: 2 }
    }
}

/// Moves in every coordination walk.
pub const COORDINATION_HORIZON: usize = 3;

fn coordination_side(cfg: &CoordinationConfig, video: bool) -> Vec<TripletRecord> {
    let side = side_prefix(video);
    let mut records = Vec::new();
    for i in 0..cfg.starts {
        records.push(TripletRecord::new(
            &format!("s{side}{i}"),
            &format!("f{side}"),
            &format!("m{side}"),
            None,
        ));
    }
    for k in 0..cfg.starts {
        records.push(TripletRecord::new(
            &format!("m{side}"),
            &format!("g{side}{k}"),
            &format!("b{side}{k}"),
            None,
        ));
        records.push(TripletRecord::new(
            &format!("b{side}{k}"),
            &format!("h{side}"),
            &format!("z{side}{k}a z{side}{k}b"),
            None,
        ));
    }
    records
}

/// Build one coordination instance for explicit start indices: the video
/// agent starts at its `i`-th start but must take branch `j`, and the
/// context agent starts at its `j`-th start but must take branch `i`.
pub fn gen_coordination_task_with(
    cfg: &CoordinationConfig,
    i: usize,
    j: usize,
    seed: u64,
) -> Result<TaskInstance> {
    if cfg.starts == 0 {
        return Err(CopathError::InvalidInput(
            "coordination tasks need at least one start per side".into(),
        ));
    }
    if i >= cfg.starts || j >= cfg.starts {
        return Err(CopathError::InvalidInput(format!(
            "start indices ({i}, {j}) out of range for {} starts",
            cfg.starts
        )));
    }
    let graph_v = build_graph(&coordination_side(cfg, true))?;
    let graph_u = build_graph(&coordination_side(cfg, false))?;

    let walk = |side: char, start: usize, branch: usize| {
        (
            vec![
                format!("s{side}{start}"),
                format!("m{side}"),
                format!("b{side}{branch}"),
                format!("z{side}{branch}a z{side}{branch}b"),
            ],
            vec![
                format!("f{side}"),
                format!("g{side}{branch}"),
                format!("h{side}"),
            ],
        )
    };
    let (ents_v, rels_v) = walk('v', i, j);
    let (ents_u, rels_u) = walk('u', j, i);
    let planted_v = resolve_planted(&graph_v, &ents_v, &rels_v)?;
    let planted_u = resolve_planted(&graph_u, &ents_u, &rels_u)?;

    let instance = TaskInstance {
        seed,
        utterance: vec![format!("sv{i}"), format!("su{j}")],
        reference: Reference {
            video: vec![planted_v.serialized.clone()],
            context: vec![planted_u.serialized.clone()],
        },
        graph_v,
        graph_u,
        planted_v: Some(planted_v),
        planted_u: Some(planted_u),
    };
    let oracle = brute_force_oracle(
        &instance,
        COORDINATION_HORIZON,
        RougeVariant::F1,
        DEFAULT_WALK_BOUND,
    )?;
    if oracle.best_v != 1.0 || oracle.best_u != 1.0 {
        return Err(CopathError::Numeric(format!(
            "coordination instance is not exactly solvable: oracle ({}, {})",
            oracle.best_v, oracle.best_u
        )));
    }
    Ok(instance)
}

/// Generate one coordination instance with start indices drawn from the
/// seed.
pub fn gen_coordination_task(cfg: &CoordinationConfig, seed: u64) -> Result<TaskInstance> {
    let mut rng = seeding::rng_from(seed);
    let i = rng.gen_range(0..cfg.starts.max(1));
    let j = rng.gen_range(0..cfg.starts.max(1));
    gen_coordination_task_with(cfg, i, j, seed)
}

pub fn gen_coordination_tasks(
    cfg: &CoordinationConfig,
    base_seed: u64,
    count: usize,
) -> Result<Vec<TaskInstance>> {
    (0..count)
        .map(|i| gen_coordination_task(cfg, seeding::mix(base_seed, i as u64)))
        .collect()
}

/// Build word vectors for synthetic data: one orthogonal basis coordinate
/// per distinct token across entity names, relation names (except the
/// reserved wait relation), and utterances. Fails if the tokens outnumber
/// the embedding width.
pub fn synth_word_vectors(instances: &[TaskInstance], dim: usize) -> Result<WordVectors> {
    let mut tokens: Vec<String> = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    let add = |tok: &str, tokens: &mut Vec<String>, seen: &mut std::collections::BTreeSet<String>| {
        if tok != STAY_RELATION_NAME && seen.insert(tok.to_string()) {
            tokens.push(tok.to_string());
        }
    };
    for inst in instances {
        for graph in [&inst.graph_v, &inst.graph_u] {
            for name in graph.entity_names() {
                for tok in name {
                    add(tok, &mut tokens, &mut seen);
                }
            }
            for (id, name) in graph.relation_names().iter().enumerate() {
                if surface_form(name) == STAY_RELATION_NAME && id == 0 {
                    continue;
                }
                for tok in name {
                    add(tok, &mut tokens, &mut seen);
                }
            }
        }
        for tok in &inst.utterance {
            add(tok, &mut tokens, &mut seen);
        }
    }
    if tokens.len() > dim {
        return Err(CopathError::InvalidInput(format!(
            "{} distinct tokens do not fit an orthogonal basis of width {dim}",
            tokens.len()
        )));
    }
    let entries = tokens
        .into_iter()
        .enumerate()
        .map(|(i, tok)| {
            let mut v = vec![0.0; dim];
            v[i] = 1.0;
            (tok, v)
        })
        .collect();
    WordVectors::from_entries(entries)
}

/// Visit every walk of exactly `horizon` edges from `start`, in adjacency
/// order, calling `visit` with the edge-id sequence. Fails once more than
/// `bound` walks have been visited. Returns the walk count.
pub fn for_each_walk(
    graph: &SemanticGraph,
    start: usize,
    horizon: usize,
    bound: usize,
    visit: &mut dyn FnMut(&[usize]) -> Result<()>,
) -> Result<usize> {
    fn recurse(
        graph: &SemanticGraph,
        at: usize,
        remaining: usize,
        bound: usize,
        stack: &mut Vec<usize>,
        count: &mut usize,
        visit: &mut dyn FnMut(&[usize]) -> Result<()>,
    ) -> Result<()> {
        if remaining == 0 {
            *count += 1;
            if *count > bound {
                return Err(CopathError::InvalidInput(format!(
                    "walk enumeration exceeded the bound of {bound}"
                )));
            }
            return visit(stack);
        }
        for &edge_id in graph.outgoing(at)? {
            let edge = graph.edge(edge_id)?;
            stack.push(edge_id);
            recurse(graph, edge.dst, remaining - 1, bound, stack, count, visit)?;
            stack.pop();
        }
        Ok(())
    }

    let mut stack = Vec::with_capacity(horizon);
    let mut count = 0usize;
    recurse(graph, start, horizon, bound, &mut stack, &mut count, visit)?;
    Ok(count)
}

/// All walks of exactly `horizon` edges from `start`, serialized.
pub fn enumerate_walks(
    graph: &SemanticGraph,
    start: usize,
    horizon: usize,
    bound: usize,
) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for_each_walk(graph, start, horizon, bound, &mut |edges| {
        out.push(serialize_edge_seq(graph, start, edges)?);
        Ok(())
    })?;
    Ok(out)
}

/// Per-side best achievable walk scores for one instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WalkOracle {
    pub best_v: f64,
    pub best_u: f64,
}

impl WalkOracle {
    pub fn total(&self) -> f64 {
        self.best_v + self.best_u
    }
}

/// The start entity a side's utterance names. Synthetic utterances carry
/// one start token per side.
fn utterance_start(graph: &SemanticGraph, utterance: &[String]) -> Result<usize> {
    utterance
        .iter()
        .find_map(|tok| graph.entity_id(tok))
        .ok_or_else(|| {
            CopathError::InvalidInput(
                "utterance does not name a start entity of this graph".into(),
            )
        })
}

/// Exhaustive per-side maxima of the walk reward. The reward decomposes
/// over sides, so maximizing each side independently is exact.
pub fn brute_force_oracle(
    instance: &TaskInstance,
    horizon: usize,
    variant: RougeVariant,
    bound: usize,
) -> Result<WalkOracle> {
    let side_best = |graph: &SemanticGraph, refs: &[String]| -> Result<f64> {
        let start = utterance_start(graph, &instance.utterance)?;
        let mut best = 0.0f64;
        for_each_walk(graph, start, horizon, bound, &mut |edges| {
            let text = serialize_edge_seq(graph, start, edges)?;
            best = best.max(best_rouge1(&text, refs, variant));
            Ok(())
        })?;
        Ok(best)
    };
    Ok(WalkOracle {
        best_v: side_best(&instance.graph_v, &instance.reference.video)?,
        best_u: side_best(&instance.graph_u, &instance.reference.context)?,
    })
}

/// Best mean reward any pair of *independent* deterministic policies can
/// reach on a shared-graph instance set.
///
/// With both graphs shared, an independent policy's walk can depend only
/// on its own start, so instances group by start; the best walk per group
/// maximizes the summed score over the group, and the ceiling is the mean
/// over instances of those per-group maxima, summed over sides.
pub fn independence_ceiling(
    instances: &[TaskInstance],
    horizon: usize,
    variant: RougeVariant,
    bound: usize,
) -> Result<f64> {
    if instances.is_empty() {
        return Err(CopathError::InvalidInput(
            "cannot bound an empty instance set".into(),
        ));
    }
    for inst in &instances[1..] {
        if inst.graph_v != instances[0].graph_v || inst.graph_u != instances[0].graph_u {
            return Err(CopathError::InvalidInput(
                "independence ceiling requires all instances to share both graphs".into(),
            ));
        }
    }

    let side_ceiling = |graph: &SemanticGraph, refs: &dyn Fn(&TaskInstance) -> &[String]| -> Result<f64> {
        let mut groups: std::collections::BTreeMap<usize, Vec<&TaskInstance>> =
            std::collections::BTreeMap::new();
        for inst in instances {
            groups
                .entry(utterance_start(graph, &inst.utterance)?)
                .or_default()
                .push(inst);
        }
        let mut total = 0.0;
        for (start, group) in groups {
            let mut best = f64::NEG_INFINITY;
            for_each_walk(graph, start, horizon, bound, &mut |edges| {
                let text = serialize_edge_seq(graph, start, edges)?;
                let sum: f64 = group
                    .iter()
                    .map(|inst| best_rouge1(&text, refs(inst), variant))
                    .sum();
                best = best.max(sum);
                Ok(())
            })?;
            total += best;
        }
        Ok(total / instances.len() as f64)
    };

    let ceiling_v = side_ceiling(&instances[0].graph_v, &|inst| &inst.reference.video)?;
    let ceiling_u = side_ceiling(&instances[0].graph_u, &|inst| &inst.reference.context)?;
    Ok(ceiling_v + ceiling_u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reward::rouge1;
    use crate::semgraph::STAY_RELATION;
    use approx::assert_abs_diff_eq;

    fn small_cfg() -> SynthConfig {
        SynthConfig {
            nodes: 8,
            branching: 3,
            horizon: 2,
        }
    }

    #[test]
    fn generation_is_seed_deterministic() {
        let a = gen_task(&small_cfg(), 42).unwrap();
        let b = gen_task(&small_cfg(), 42).unwrap();
        assert_eq!(a, b);
        let c = gen_task(&small_cfg(), 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn planted_walk_edges_exist_and_use_planted_labels() {
        let inst = gen_task(&small_cfg(), 7).unwrap();
        for (graph, planted) in [
            (&inst.graph_v, inst.planted_v.as_ref().unwrap()),
            (&inst.graph_u, inst.planted_u.as_ref().unwrap()),
        ] {
            assert_eq!(planted.entities.len(), 3);
            assert_eq!(planted.relations.len(), 2);
            for step in 0..2 {
                let src = planted.entities[step];
                let dst = planted.entities[step + 1];
                let rel = planted.relations[step];
                assert_ne!(src, dst, "planted walk visits distinct nodes");
                let found = graph.outgoing(src).unwrap().iter().any(|&id| {
                    let e = graph.edge(id).unwrap();
                    e.rel == rel && e.dst == dst
                });
                assert!(found, "planted edge missing from graph");
                let label = surface_form(graph.relation_tokens(rel).unwrap());
                assert!(label.starts_with('p'), "planted label {label}");
            }
            // All non-planted, non-wait relations draw from the distractor
            // pool.
            for (id, name) in graph.relation_names().iter().enumerate() {
                if id == STAY_RELATION || planted.relations.contains(&id) {
                    continue;
                }
                assert!(surface_form(name).starts_with('q'), "label {name:?}");
            }
        }
    }

    #[test]
    fn instances_have_full_node_sets_and_bounded_branching() {
        let cfg = small_cfg();
        let inst = gen_task(&cfg, 9).unwrap();
        assert_eq!(inst.graph_v.entity_count(), cfg.nodes);
        assert_eq!(inst.graph_u.entity_count(), cfg.nodes);
        for graph in [&inst.graph_v, &inst.graph_u] {
            for e in 0..graph.entity_count() {
                // Wait loop + at most `branching` labeled edges.
                assert!(graph.outgoing(e).unwrap().len() <= 1 + cfg.branching);
            }
        }
    }

    #[test]
    fn references_are_the_serialized_planted_walks() {
        let inst = gen_task(&small_cfg(), 11).unwrap();
        let planted = inst.planted_v.as_ref().unwrap();
        assert_eq!(inst.reference.video, vec![planted.serialized.clone()]);
        // The serialization has start + 2 (relation, entity) pairs.
        assert_eq!(planted.serialized.split_whitespace().count(), 5);
        // And it matches the edge-walk serializer against the real graph.
        let mut edges = Vec::new();
        for step in 0..2 {
            let src = planted.entities[step];
            let id = inst
                .graph_v
                .outgoing(src)
                .unwrap()
                .iter()
                .copied()
                .find(|&id| {
                    let e = inst.graph_v.edge(id).unwrap();
                    e.rel == planted.relations[step] && e.dst == planted.entities[step + 1]
                })
                .unwrap();
            edges.push(id);
        }
        assert_eq!(
            serialize_edge_seq(&inst.graph_v, planted.entities[0], &edges).unwrap(),
            planted.serialized
        );
    }

    #[test]
    fn utterance_names_both_starts() {
        let inst = gen_task(&small_cfg(), 13).unwrap();
        let planted_v = inst.planted_v.as_ref().unwrap();
        let planted_u = inst.planted_u.as_ref().unwrap();
        assert_eq!(
            inst.graph_v.entity_id(&inst.utterance[0]),
            Some(planted_v.entities[0])
        );
        assert_eq!(
            inst.graph_u.entity_id(&inst.utterance[1]),
            Some(planted_u.entities[0])
        );
    }

    #[test]
    fn walk_enumeration_counts_and_bounds() {
        let graph = build_graph(&[
            TripletRecord::new("a", "go", "b", None),
            TripletRecord::new("a", "go2", "c", None),
        ])
        .unwrap();
        let a = graph.entity_id("a").unwrap();
        // Depth 2 from a: wait-wait, wait-go, wait-go2, go-wait, go2-wait.
        let walks = enumerate_walks(&graph, a, 2, 100).unwrap();
        assert_eq!(walks.len(), 5);
        assert!(walks.contains(&"a".to_string()));
        assert!(walks.contains(&"a go b".to_string()));
        assert!(walks.contains(&"a go2 c".to_string()));
        // Tight bound triggers the enumeration guard.
        assert!(enumerate_walks(&graph, a, 2, 4).is_err());
    }

    #[test]
    fn oracle_is_exactly_two_on_planted_tasks() {
        for seed in 0..5 {
            let inst = gen_task(&small_cfg(), seed).unwrap();
            let oracle =
                brute_force_oracle(&inst, 2, RougeVariant::F1, DEFAULT_WALK_BOUND).unwrap();
            assert_eq!(oracle.total(), 2.0);
        }
    }

    #[test]
    fn coordination_graphs_are_shared_across_seeds() {
        let cfg = CoordinationConfig::default();
        let a = gen_coordination_task(&cfg, 1).unwrap();
        let b = gen_coordination_task(&cfg, 2).unwrap();
        assert_eq!(a.graph_v, b.graph_v);
        assert_eq!(a.graph_u, b.graph_u);
        // Across enough seeds both branch assignments appear.
        let mut combos = std::collections::BTreeSet::new();
        for seed in 0..32 {
            let inst = gen_coordination_task(&cfg, seed).unwrap();
            combos.insert(inst.utterance.join(" "));
        }
        assert_eq!(combos.len(), 4, "all four start pairs should appear");
    }

    #[test]
    fn coordination_walks_cross_reference_the_other_sides_start() {
        let cfg = CoordinationConfig::default();
        let inst = gen_coordination_task_with(&cfg, 0, 1, 5).unwrap();
        let planted_v = inst.planted_v.as_ref().unwrap();
        let planted_u = inst.planted_u.as_ref().unwrap();
        // Video starts at sv0 but must take branch 1; context starts at
        // su1 but must take branch 0.
        assert_eq!(planted_v.serialized, "sv0 fv mv gv1 bv1 hv zv1a zv1b");
        assert_eq!(planted_u.serialized, "su1 fu mu gu0 bu0 hu zu0a zu0b");
    }

    #[test]
    fn wrong_branch_scores_exactly_one_half() {
        let cfg = CoordinationConfig::default();
        let inst = gen_coordination_task_with(&cfg, 0, 1, 5).unwrap();
        // The branch-0 walk against the branch-1 reference shares
        // start/hop/mid/tail tokens: overlap 4 of 8 on both sides → 1/2.
        let wrong = "sv0 fv mv gv0 bv0 hv zv0a zv0b";
        let score = rouge1(wrong, &inst.reference.video[0], RougeVariant::F1);
        assert_abs_diff_eq!(score, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn coordination_oracle_is_two_but_independent_ceiling_is_three_halves() {
        let cfg = CoordinationConfig::default();
        let mut instances = Vec::new();
        for i in 0..2 {
            for j in 0..2 {
                instances.push(gen_coordination_task_with(&cfg, i, j, (i * 2 + j) as u64).unwrap());
            }
        }
        for inst in &instances {
            let oracle = brute_force_oracle(
                inst,
                COORDINATION_HORIZON,
                RougeVariant::F1,
                DEFAULT_WALK_BOUND,
            )
            .unwrap();
            assert_eq!(oracle.total(), 2.0);
        }
        // Per side and start, the best fixed walk earns 1 on the matching
        // branch and 1/2 on the other: (1 + 1/2)/2 per side.
        let ceiling = independence_ceiling(
            &instances,
            COORDINATION_HORIZON,
            RougeVariant::F1,
            DEFAULT_WALK_BOUND,
        )
        .unwrap();
        assert_abs_diff_eq!(ceiling, 1.5, epsilon = 1e-12);
    }

    #[test]
    fn ceiling_rejects_mixed_graphs() {
        let coord = gen_coordination_task(&CoordinationConfig::default(), 1).unwrap();
        let planted = gen_task(&small_cfg(), 1).unwrap();
        assert!(independence_ceiling(
            &[coord, planted],
            COORDINATION_HORIZON,
            RougeVariant::F1,
            DEFAULT_WALK_BOUND
        )
        .is_err());
    }

    #[test]
    fn synthetic_word_vectors_form_an_orthogonal_basis() {
        let instances = gen_tasks(&small_cfg(), 3, 4).unwrap();
        let vectors = synth_word_vectors(&instances, 64).unwrap();
        // Every entity and labeled relation token is covered; the wait
        // relation stays out-of-vocabulary.
        assert!(vectors.get("STAY").is_none());
        let inst = &instances[0];
        for name in inst.graph_v.entity_names() {
            assert!(vectors.get(&surface_form(name)).is_some());
        }
        for vi in 0..vectors.len() {
            for vj in 0..vectors.len() {
                let a = &vectors.entries()[vi].1;
                let b = &vectors.entries()[vj].1;
                let dot: f64 = a.iter().zip(b.iter()).map(|(x, y)| x * y).sum();
                assert_eq!(dot, if vi == vj { 1.0 } else { 0.0 });
            }
        }
        // Too many tokens for the width is an error.
        assert!(synth_word_vectors(&instances, 3).is_err());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(gen_task(
            &SynthConfig {
                nodes: 2,
                branching: 3,
                horizon: 2
            },
            1
        )
        .is_err());
        assert!(gen_task(
            &SynthConfig {
                nodes: 8,
                branching: 0,
                horizon: 2
            },
            1
        )
        .is_err());
        assert!(gen_coordination_task_with(&CoordinationConfig { starts: 2 }, 2, 0, 1).is_err());
    }
}
