//! Semantic-graph construction from subject/predicate/object triplets.
//!
//! Two graphs are built the same way from different sources: a video graph
//! from detector triplets (kept only above a confidence threshold) and a
//! dialogue-context graph from utterance triplets (no confidences). Near
//! duplicate entity names are merged by word-vector cosine similarity before
//! construction, every node receives a reserved STAY self-loop so an agent
//! standing on any node always has at least one action, and out-edges are
//! ordered deterministically by (relation id, target id).

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CopathError, Result};
use crate::lexicon::WordVectors;

/// Reserved relation name for the self-loop added to every node. Stored
/// uppercase on purpose: tokenization lowercases real input, so STAY can
/// never collide with a user relation and stays out-of-vocabulary for
/// word-vector lookups.
pub const STAY_RELATION_NAME: &str = "STAY";

/// Relation id of the STAY self-loop (always the first interned relation).
pub const STAY_RELATION: usize = 0;

/// Current on-disk format version for graph documents.
pub const GRAPH_FORMAT_VERSION: u32 = 1;

pub type EntityId = usize;
pub type RelationId = usize;

/// Lowercase `text` and split it on whitespace and underscores, dropping
/// empty fragments. This is the single tokenization rule for triplet
/// fields, utterances, and reference strings.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| c.is_whitespace() || c == '_')
        .filter(|t| !t.is_empty())
        .map(|t| t.to_string())
        .collect()
}

/// One subject/predicate/object triplet, fields already tokenized.
/// `confidence` is present for detector (video) triplets and absent for
/// dialogue-context triplets.
#[derive(Debug, Clone, PartialEq)]
pub struct TripletRecord {
    pub subject: Vec<String>,
    pub predicate: Vec<String>,
    pub object: Vec<String>,
    pub confidence: Option<f64>,
}

impl TripletRecord {
    pub fn new(subject: &str, predicate: &str, object: &str, confidence: Option<f64>) -> Self {
        TripletRecord {
            subject: tokenize(subject),
            predicate: tokenize(predicate),
            object: tokenize(object),
            confidence,
        }
    }
}

/// Join name tokens into the canonical surface form used as an identity key.
pub fn surface_form(tokens: &[String]) -> String {
    tokens.join(" ")
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TripletLine {
    subject: String,
    predicate: String,
    object: String,
    #[serde(default)]
    confidence: Option<f64>,
}

/// Parse line-delimited triplet records (one JSON object per line; blank
/// lines are ignored). Any malformed line fails with its 1-based number.
pub fn parse_triplets(text: &str) -> Result<Vec<TripletRecord>> {
    let mut records = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed: TripletLine = serde_json::from_str(line).map_err(|e| CopathError::Parse {
            line: idx + 1,
            msg: e.to_string(),
        })?;
        let record = TripletRecord::new(
            &parsed.subject,
            &parsed.predicate,
            &parsed.object,
            parsed.confidence,
        );
        if record.subject.is_empty() || record.predicate.is_empty() || record.object.is_empty() {
            return Err(CopathError::Parse {
                line: idx + 1,
                msg: "subject, predicate, and object must each contain at least one token".into(),
            });
        }
        if let Some(c) = record.confidence {
            if !c.is_finite() {
                return Err(CopathError::Parse {
                    line: idx + 1,
                    msg: format!("confidence must be finite, got {c}"),
                });
            }
        }
        records.push(record);
    }
    Ok(records)
}

/// Read a triplet file (see [`parse_triplets`]).
pub fn load_triplets(path: &Path) -> Result<Vec<TripletRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| CopathError::io(path, e))?;
    parse_triplets(&text)
}

/// Keep only records whose confidence is strictly greater than `threshold`.
///
/// Every record must carry a confidence; detector dumps that omit one are
/// rejected rather than silently kept or dropped.
pub fn filter_video_triplets(
    records: &[TripletRecord],
    threshold: f64,
) -> Result<Vec<TripletRecord>> {
    if !threshold.is_finite() {
        return Err(CopathError::InvalidInput(format!(
            "confidence threshold must be finite, got {threshold}"
        )));
    }
    let mut kept = Vec::new();
    for (i, record) in records.iter().enumerate() {
        match record.confidence {
            Some(c) => {
                if c > threshold {
                    kept.push(record.clone());
                }
            }
            None => {
                return Err(CopathError::InvalidInput(format!(
                    "record {i} ({} / {} / {}) has no confidence; video filtering requires one",
                    surface_form(&record.subject),
                    surface_form(&record.predicate),
                    surface_form(&record.object),
                )))
            }
        }
    }
    Ok(kept)
}

/// Map from original entity surface form to the canonical surface form it
/// was merged into. Idempotent: canonical forms map to themselves.
pub type MergeMap = BTreeMap<String, String>;

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }
    fn find(&mut self, i: usize) -> usize {
        if self.parent[i] != i {
            let root = self.find(self.parent[i]);
            self.parent[i] = root;
        }
        self.parent[i]
    }
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[rb.max(ra)] = ra.min(rb);
        }
    }
}

/// Cosine similarity of two same-length vectors; `None` when either norm
/// vanishes (undefined direction).
fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na <= f64::EPSILON || nb <= f64::EPSILON {
        None
    } else {
        Some(dot / (na * nb))
    }
}

/// Merge near-duplicate entities: entity names whose mean token word
/// vectors reach cosine similarity ≥ `tau` are collapsed (transitively)
/// onto one canonical name — the most frequent surface form in `records`,
/// ties broken lexicographically. Returns the rewritten records and the
/// surface-form merge map.
///
/// Names whose tokens are all out-of-vocabulary have no direction and are
/// left unmerged. `tau` must be positive; values above 1 merge nothing
/// beyond byte-identical names (which are a single entity to begin with).
pub fn merge_similar_entities(
    records: &[TripletRecord],
    vectors: &WordVectors,
    tau: f64,
) -> Result<(Vec<TripletRecord>, MergeMap)> {
    if tau <= 0.0 || !tau.is_finite() {
        return Err(CopathError::InvalidInput(format!(
            "tau must be a positive finite number, got {tau}"
        )));
    }

    // Unique entity names in first-appearance order, plus occurrence counts.
    let mut names: Vec<Vec<String>> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut counts: Vec<usize> = Vec::new();
    for record in records {
        for tokens in [&record.subject, &record.object] {
            let key = surface_form(tokens);
            match index.get(&key) {
                Some(&i) => counts[i] += 1,
                None => {
                    index.insert(key, names.len());
                    names.push(tokens.clone());
                    counts.push(1);
                }
            }
        }
    }

    // Mean word vector per name over in-vocabulary tokens only.
    let embeddings: Vec<Option<Vec<f64>>> = names
        .iter()
        .map(|tokens| {
            let rows: Vec<&[f64]> = tokens.iter().filter_map(|t| vectors.get(t)).collect();
            if rows.is_empty() {
                log::warn!(
                    "entity '{}' has no in-vocabulary tokens; leaving it unmerged",
                    surface_form(tokens)
                );
                return None;
            }
            let dim = rows[0].len();
            let mut mean = vec![0.0; dim];
            for row in &rows {
                for (m, v) in mean.iter_mut().zip(*row) {
                    *m += v;
                }
            }
            for m in &mut mean {
                *m /= rows.len() as f64;
            }
            Some(mean)
        })
        .collect();

    let mut clusters = UnionFind::new(names.len());
    for i in 0..names.len() {
        for j in (i + 1)..names.len() {
            if let (Some(a), Some(b)) = (&embeddings[i], &embeddings[j]) {
                if let Some(cos) = cosine(a, b) {
                    if cos >= tau {
                        clusters.union(i, j);
                    }
                }
            }
        }
    }

    // Canonical representative per cluster: highest occurrence count, then
    // lexicographically smallest surface form.
    let mut cluster_members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..names.len() {
        cluster_members.entry(clusters.find(i)).or_default().push(i);
    }
    let mut canonical_of: Vec<usize> = (0..names.len()).collect();
    for members in cluster_members.values() {
        let &best = members
            .iter()
            .min_by(|&&a, &&b| {
                counts[b]
                    .cmp(&counts[a])
                    .then_with(|| surface_form(&names[a]).cmp(&surface_form(&names[b])))
            })
            .expect("cluster is never empty");
        for &m in members {
            canonical_of[m] = best;
        }
    }

    let mut merge_map = MergeMap::new();
    for (i, tokens) in names.iter().enumerate() {
        merge_map.insert(
            surface_form(tokens),
            surface_form(&names[canonical_of[i]]),
        );
    }

    let rewritten = records
        .iter()
        .map(|r| {
            let rewrite = |tokens: &Vec<String>| -> Vec<String> {
                let i = index[&surface_form(tokens)];
                names[canonical_of[i]].clone()
            };
            TripletRecord {
                subject: rewrite(&r.subject),
                predicate: r.predicate.clone(),
                object: rewrite(&r.object),
                confidence: r.confidence,
            }
        })
        .collect();

    Ok((rewritten, merge_map))
}

/// One labeled directed edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Edge {
    pub src: EntityId,
    pub rel: RelationId,
    pub dst: EntityId,
}

/// A labeled directed multigraph with interned entity/relation names,
/// deduplicated edges, a STAY self-loop on every node, and adjacency
/// lists sorted by (relation id, target id).
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticGraph {
    entities: Vec<Vec<String>>,
    relations: Vec<Vec<String>>,
    edges: Vec<Edge>,
    adjacency: Vec<Vec<usize>>,
    entity_index: BTreeMap<String, EntityId>,
}

impl SemanticGraph {
    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn relation_count(&self) -> usize {
        self.relations.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn entity_tokens(&self, id: EntityId) -> Result<&[String]> {
        self.entities
            .get(id)
            .map(|t| t.as_slice())
            .ok_or_else(|| CopathError::InvalidInput(format!("unknown entity id {id}")))
    }

    pub fn relation_tokens(&self, id: RelationId) -> Result<&[String]> {
        self.relations
            .get(id)
            .map(|t| t.as_slice())
            .ok_or_else(|| CopathError::InvalidInput(format!("unknown relation id {id}")))
    }

    pub fn entity_names(&self) -> &[Vec<String>] {
        &self.entities
    }

    pub fn relation_names(&self) -> &[Vec<String>] {
        &self.relations
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, idx: usize) -> Result<Edge> {
        self.edges
            .get(idx)
            .copied()
            .ok_or_else(|| CopathError::InvalidInput(format!("unknown edge index {idx}")))
    }

    pub fn entity_id(&self, surface: &str) -> Option<EntityId> {
        self.entity_index.get(surface).copied()
    }

    /// Linear-scan relation lookup by surface name; relation vocabularies
    /// stay small.
    pub fn relation_id(&self, surface: &str) -> Option<RelationId> {
        self.relations.iter().position(|r| surface_form(r) == surface)
    }

    /// Out-edge indices of `entity`, sorted by (relation id, target id).
    /// Never empty: every node carries at least its STAY self-loop.
    pub fn outgoing(&self, entity: EntityId) -> Result<&[usize]> {
        self.adjacency
            .get(entity)
            .map(|v| v.as_slice())
            .ok_or_else(|| CopathError::InvalidInput(format!("unknown entity id {entity}")))
    }

    pub(crate) fn from_parts(
        entities: Vec<Vec<String>>,
        relations: Vec<Vec<String>>,
        edges: Vec<Edge>,
    ) -> Result<Self> {
        if relations.first().map(|r| r.as_slice()) != Some(&[STAY_RELATION_NAME.to_string()][..]) {
            return Err(CopathError::InvalidInput(
                "relation id 0 must be the reserved STAY relation".into(),
            ));
        }
        for edge in &edges {
            if edge.src >= entities.len() || edge.dst >= entities.len() {
                return Err(CopathError::InvalidInput(format!(
                    "edge ({}, {}, {}) references an unknown entity",
                    edge.src, edge.rel, edge.dst
                )));
            }
            if edge.rel >= relations.len() {
                return Err(CopathError::InvalidInput(format!(
                    "edge ({}, {}, {}) references an unknown relation",
                    edge.src, edge.rel, edge.dst
                )));
            }
        }
        let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); entities.len()];
        for (idx, edge) in edges.iter().enumerate() {
            adjacency[edge.src].push(idx);
        }
        for list in &mut adjacency {
            list.sort_by_key(|&i| (edges[i].rel, edges[i].dst));
            if list.is_empty() {
                return Err(CopathError::InvalidInput(
                    "every entity must have at least one outgoing edge".into(),
                ));
            }
        }
        let mut entity_index = BTreeMap::new();
        for (id, tokens) in entities.iter().enumerate() {
            if entity_index.insert(surface_form(tokens), id).is_some() {
                return Err(CopathError::InvalidInput(format!(
                    "duplicate entity name '{}'",
                    surface_form(tokens)
                )));
            }
        }
        Ok(SemanticGraph {
            entities,
            relations,
            edges,
            adjacency,
            entity_index,
        })
    }
}

/// Build a graph from (already filtered and merged) triplet records.
///
/// Entities and relations are interned in first-appearance order (STAY is
/// always relation 0), exact duplicate edges are dropped, and a STAY
/// self-loop is added to every entity. Deterministic: the same records
/// always produce a byte-identical serialized graph.
pub fn build_graph(records: &[TripletRecord]) -> Result<SemanticGraph> {
    if records.is_empty() {
        return Err(CopathError::InvalidInput(
            "empty graph: no triplet records to build from".into(),
        ));
    }

    let mut entities: Vec<Vec<String>> = Vec::new();
    let mut entity_index: HashMap<String, usize> = HashMap::new();
    let mut relations: Vec<Vec<String>> = vec![vec![STAY_RELATION_NAME.to_string()]];
    let mut relation_index: HashMap<String, usize> = HashMap::new();

    let intern_entity =
        |tokens: &Vec<String>, entities: &mut Vec<Vec<String>>, index: &mut HashMap<String, usize>| {
            let key = surface_form(tokens);
            *index.entry(key).or_insert_with(|| {
                entities.push(tokens.clone());
                entities.len() - 1
            })
        };

    let mut edge_set: BTreeSet<Edge> = BTreeSet::new();
    for record in records {
        let src = intern_entity(&record.subject, &mut entities, &mut entity_index);
        let dst = intern_entity(&record.object, &mut entities, &mut entity_index);
        let rel_key = surface_form(&record.predicate);
        let rel = *relation_index.entry(rel_key).or_insert_with(|| {
            relations.push(record.predicate.clone());
            relations.len() - 1
        });
        edge_set.insert(Edge { src, rel, dst });
    }
    for id in 0..entities.len() {
        edge_set.insert(Edge {
            src: id,
            rel: STAY_RELATION,
            dst: id,
        });
    }

    let edges: Vec<Edge> = edge_set.into_iter().collect();
    SemanticGraph::from_parts(entities, relations, edges)
}

/// On-disk graph document (versioned JSON).
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphDoc {
    format_version: u32,
    kind: String,
    entities: Vec<Vec<String>>,
    relations: Vec<Vec<String>>,
    edges: Vec<(usize, usize, usize)>,
}

/// Serialize a graph to its versioned JSON document.
pub fn graph_to_json(graph: &SemanticGraph) -> String {
    let doc = GraphDoc {
        format_version: GRAPH_FORMAT_VERSION,
        kind: "semantic_graph".into(),
        entities: graph.entities.clone(),
        relations: graph.relations.clone(),
        edges: graph.edges.iter().map(|e| (e.src, e.rel, e.dst)).collect(),
    };
    serde_json::to_string_pretty(&doc).expect("graph document serialization cannot fail")
}

/// Parse a graph from its versioned JSON document.
pub fn graph_from_json(text: &str) -> Result<SemanticGraph> {
    let doc: GraphDoc = serde_json::from_str(text).map_err(|e| CopathError::Parse {
        line: e.line(),
        msg: e.to_string(),
    })?;
    if doc.format_version != GRAPH_FORMAT_VERSION {
        return Err(CopathError::Version {
            kind: "semantic_graph".into(),
            found: doc.format_version,
            supported: GRAPH_FORMAT_VERSION,
        });
    }
    if doc.kind != "semantic_graph" {
        return Err(CopathError::InvalidInput(format!(
            "expected a semantic_graph document, found kind '{}'",
            doc.kind
        )));
    }
    let edges = doc
        .edges
        .into_iter()
        .map(|(src, rel, dst)| Edge { src, rel, dst })
        .collect();
    SemanticGraph::from_parts(doc.entities, doc.relations, edges)
}

/// Write a graph checkpoint file.
pub fn save_graph(graph: &SemanticGraph, path: &Path) -> Result<()> {
    let mut file = std::fs::File::create(path).map_err(|e| CopathError::io(path, e))?;
    file.write_all(graph_to_json(graph).as_bytes())
        .map_err(|e| CopathError::io(path, e))
}

/// Read a graph checkpoint file.
pub fn load_graph(path: &Path) -> Result<SemanticGraph> {
    let text = std::fs::read_to_string(path).map_err(|e| CopathError::io(path, e))?;
    graph_from_json(&text)
}

/// Write a merge map as a JSON report.
pub fn save_merge_map(map: &MergeMap, path: &Path) -> Result<()> {
    let text =
        serde_json::to_string_pretty(map).expect("merge map serialization cannot fail");
    let mut file = std::fs::File::create(path).map_err(|e| CopathError::io(path, e))?;
    file.write_all(text.as_bytes())
        .map_err(|e| CopathError::io(path, e))
}

/// Read triplets from a reader, for streaming CLI use.
pub fn read_triplets(reader: impl BufRead) -> Result<Vec<TripletRecord>> {
    let mut text = String::new();
    for line in reader.lines() {
        let line = line.map_err(|e| CopathError::Io {
            path: "<stream>".into(),
            source: e,
        })?;
        text.push_str(&line);
        text.push('\n');
    }
    parse_triplets(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(s: &str, p: &str, o: &str, c: Option<f64>) -> TripletRecord {
        TripletRecord::new(s, p, o, c)
    }

    #[test]
    fn tokenize_lowercases_and_splits_on_whitespace_and_underscores() {
        assert_eq!(tokenize("Front_Door"), vec!["front", "door"]);
        assert_eq!(tokenize("  hello   world "), vec!["hello", "world"]);
        assert_eq!(tokenize("a_b c"), vec!["a", "b", "c"]);
        assert!(tokenize("___").is_empty());
    }

    #[test]
    fn filter_keeps_strictly_above_threshold() {
        // Confidences {0.4, 0.5, 0.6, 0.9} at threshold 0.5 keep exactly the
        // two records above it; 0.5 itself is dropped (strict inequality).
        let records = vec![
            rec("a", "r", "b", Some(0.4)),
            rec("b", "r", "c", Some(0.5)),
            rec("c", "r", "d", Some(0.6)),
            rec("d", "r", "e", Some(0.9)),
        ];
        let kept = filter_video_triplets(&records, 0.5).unwrap();
        assert_eq!(kept.len(), 2);
        assert_eq!(kept[0].confidence, Some(0.6));
        assert_eq!(kept[1].confidence, Some(0.9));
    }

    #[test]
    fn filter_rejects_missing_confidence() {
        let records = vec![rec("a", "r", "b", None)];
        assert!(matches!(
            filter_video_triplets(&records, 0.5),
            Err(CopathError::InvalidInput(_))
        ));
    }

    #[test]
    fn filter_is_idempotent() {
        let records = vec![
            rec("a", "r", "b", Some(0.7)),
            rec("b", "r", "c", Some(0.2)),
        ];
        let once = filter_video_triplets(&records, 0.5).unwrap();
        let twice = filter_video_triplets(&once, 0.5).unwrap();
        assert_eq!(once, twice);
    }

    fn two_dim_vectors() -> WordVectors {
        // cos(a, b) = 0.95 / sqrt(0.95^2 + 0.3122^2)
        //           = 0.95 / 0.99998... ≈ 0.950015 — above 0.9, below 0.96.
        WordVectors::from_entries(vec![
            ("alpha".into(), vec![1.0, 0.0]),
            ("beta".into(), vec![0.95, 0.3122]),
        ])
        .unwrap()
    }

    #[test]
    fn merge_joins_names_at_cosine_above_tau() {
        let records = vec![
            rec("alpha", "r", "beta", None),
            rec("alpha", "s", "beta", None),
        ];
        let (rewritten, map) = merge_similar_entities(&records, &two_dim_vectors(), 0.9).unwrap();
        // Equal occurrence counts (2 each): lexicographic tie-break keeps "alpha".
        assert_eq!(map.get("beta"), Some(&"alpha".to_string()));
        assert_eq!(map.get("alpha"), Some(&"alpha".to_string()));
        assert!(rewritten
            .iter()
            .all(|r| r.subject == vec!["alpha"] && r.object == vec!["alpha"]));
    }

    #[test]
    fn merge_respects_tighter_tau() {
        // Same pair at tau = 0.96 stays apart: cosine ≈ 0.950015 < 0.96.
        let records = vec![rec("alpha", "r", "beta", None)];
        let (_, map) = merge_similar_entities(&records, &two_dim_vectors(), 0.96).unwrap();
        assert_eq!(map.get("beta"), Some(&"beta".to_string()));
    }

    #[test]
    fn merge_canonical_is_most_frequent_surface_form() {
        // "beta" appears three times, "alpha" once: canonical flips to beta.
        let records = vec![
            rec("alpha", "r", "beta", None),
            rec("beta", "s", "beta", None),
        ];
        let (_, map) = merge_similar_entities(&records, &two_dim_vectors(), 0.9).unwrap();
        assert_eq!(map.get("alpha"), Some(&"beta".to_string()));
    }

    #[test]
    fn merge_leaves_all_oov_names_alone() {
        let vectors = WordVectors::from_entries(vec![("alpha".into(), vec![1.0, 0.0])]).unwrap();
        let records = vec![rec("ghost", "r", "phantom", None)];
        let (rewritten, map) = merge_similar_entities(&records, &vectors, 0.5).unwrap();
        assert_eq!(map.get("ghost"), Some(&"ghost".to_string()));
        assert_eq!(map.get("phantom"), Some(&"phantom".to_string()));
        assert_eq!(rewritten[0].subject, vec!["ghost"]);
    }

    #[test]
    fn merge_above_one_is_identity_up_to_duplicates() {
        let records = vec![
            rec("alpha", "r", "beta", None),
            rec("alpha", "s", "alpha", None),
        ];
        let (rewritten, map) =
            merge_similar_entities(&records, &two_dim_vectors(), 1.0 + 1e-9).unwrap();
        assert!(map.iter().all(|(k, v)| k == v));
        assert_eq!(rewritten[0], records[0]);
    }

    #[test]
    fn merge_rejects_non_positive_tau() {
        let records = vec![rec("alpha", "r", "beta", None)];
        assert!(merge_similar_entities(&records, &two_dim_vectors(), 0.0).is_err());
        assert!(merge_similar_entities(&records, &two_dim_vectors(), -0.5).is_err());
    }

    #[test]
    fn merge_is_transitive_through_a_middle_name() {
        // a~b and b~c but a and c only meet through b: one cluster of three.
        let vectors = WordVectors::from_entries(vec![
            ("a".into(), vec![1.0, 0.0]),
            ("b".into(), vec![0.96, 0.28]),
            ("c".into(), vec![0.8432, 0.5376]),
        ])
        .unwrap();
        // cos(a,b) = 0.96, cos(b,c) = 0.96·0.8432 + 0.28·0.5376 ≈ 0.96, but
        // cos(a,c) = 0.8432 < 0.9.
        let records = vec![
            rec("a", "r", "b", None),
            rec("b", "r", "c", None),
            rec("a", "r", "a", None),
        ];
        let (_, map) = merge_similar_entities(&records, &vectors, 0.9).unwrap();
        // "a" appears 3 times (2 subjects + 1 object), b twice, c once.
        assert_eq!(map.get("a"), Some(&"a".to_string()));
        assert_eq!(map.get("b"), Some(&"a".to_string()));
        assert_eq!(map.get("c"), Some(&"a".to_string()));
    }

    #[test]
    fn build_graph_chain_counts() {
        // Chain a -r1-> b -r2-> c: 3 entities, STAY + 2 relations, and
        // 2 user edges + 3 STAY self-loops = 5 edges.
        let records = vec![rec("a", "r1", "b", None), rec("b", "r2", "c", None)];
        let graph = build_graph(&records).unwrap();
        assert_eq!(graph.entity_count(), 3);
        assert_eq!(graph.relation_count(), 3);
        assert_eq!(graph.edge_count(), 5);
        assert_eq!(graph.relation_tokens(STAY_RELATION).unwrap(), ["STAY"]);
    }

    #[test]
    fn build_graph_rejects_empty_input() {
        assert!(matches!(
            build_graph(&[]),
            Err(CopathError::InvalidInput(_))
        ));
    }

    #[test]
    fn build_graph_dedups_exact_duplicate_edges() {
        let records = vec![
            rec("a", "r", "b", None),
            rec("a", "r", "b", None),
            rec("a", "s", "b", None),
        ];
        let graph = build_graph(&records).unwrap();
        // 2 distinct user edges + 2 STAY loops.
        assert_eq!(graph.edge_count(), 4);
    }

    #[test]
    fn outgoing_is_sorted_by_relation_then_target() {
        // First-appearance interning gives relations r2=1, r1=2 and
        // entities a=0, d=1, c=2, b=3, so the (relation id, target id)
        // adjacency order is STAY(a), r2->d, r1->c, r1->b.
        let records = vec![
            rec("a", "r2", "d", None),
            rec("a", "r1", "c", None),
            rec("a", "r1", "b", None),
        ];
        let graph = build_graph(&records).unwrap();
        let a = graph.entity_id("a").unwrap();
        let out: Vec<(usize, usize)> = graph
            .outgoing(a)
            .unwrap()
            .iter()
            .map(|&i| {
                let e = graph.edge(i).unwrap();
                (e.rel, e.dst)
            })
            .collect();
        assert_eq!(out[0].0, STAY_RELATION);
        for w in out.windows(2) {
            assert!(w[0] <= w[1], "adjacency must be sorted: {out:?}");
        }
        let names: Vec<&str> = out[1..]
            .iter()
            .map(|&(_, dst)| graph.entity_tokens(dst).unwrap()[0].as_str())
            .collect();
        assert_eq!(names, ["d", "c", "b"]);
    }

    #[test]
    fn outgoing_unknown_entity_errors() {
        let graph = build_graph(&[rec("a", "r", "b", None)]).unwrap();
        assert!(graph.outgoing(99).is_err());
    }

    #[test]
    fn every_entity_has_an_outgoing_edge() {
        // "c" is only ever a target; STAY still gives it an action.
        let records = vec![rec("a", "r", "b", None), rec("b", "r", "c", None)];
        let graph = build_graph(&records).unwrap();
        for id in 0..graph.entity_count() {
            assert!(!graph.outgoing(id).unwrap().is_empty());
        }
    }

    #[test]
    fn graph_serialization_round_trips_byte_identically() {
        let records = vec![
            rec("a", "r1", "b", None),
            rec("b", "r2", "c", None),
            rec("c", "r1", "a", None),
        ];
        let graph = build_graph(&records).unwrap();
        let json = graph_to_json(&graph);
        let reloaded = graph_from_json(&json).unwrap();
        assert_eq!(graph, reloaded);
        assert_eq!(json, graph_to_json(&reloaded));
    }

    #[test]
    fn graph_rejects_wrong_version() {
        let graph = build_graph(&[rec("a", "r", "b", None)]).unwrap();
        let json = graph_to_json(&graph).replace("\"format_version\": 1", "\"format_version\": 99");
        assert!(matches!(
            graph_from_json(&json),
            Err(CopathError::Version { found: 99, .. })
        ));
    }

    #[test]
    fn parse_triplets_reports_line_numbers() {
        let text = "{\"subject\":\"a\",\"predicate\":\"r\",\"object\":\"b\"}\nnot json\n";
        match parse_triplets(text) {
            Err(CopathError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn parse_triplets_reads_confidence() {
        let text = r#"{"subject":"Front_Door","predicate":"is_open","object":"now","confidence":0.75}"#;
        let records = parse_triplets(text).unwrap();
        assert_eq!(records[0].subject, vec!["front", "door"]);
        assert_eq!(records[0].predicate, vec!["is", "open"]);
        assert_eq!(records[0].confidence, Some(0.75));
    }

    #[test]
    fn build_is_deterministic() {
        let records = vec![
            rec("x", "r", "y", None),
            rec("y", "s", "z", None),
            rec("z", "r", "x", None),
        ];
        let a = graph_to_json(&build_graph(&records).unwrap());
        let b = graph_to_json(&build_graph(&records).unwrap());
        assert_eq!(a, b);
    }
}
