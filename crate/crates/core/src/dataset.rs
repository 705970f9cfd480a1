//! Task instances and dataset files.
//!
//! An instance pairs a video graph and a context graph with a query
//! utterance and reference descriptions; synthetic instances also carry
//! the planted walk per side. A dataset-wide vocabulary interns every
//! entity/relation surface name across instances so embedding rows are
//! shared, and a per-instance binding maps local graph ids to those rows.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CopathError, Result};
use crate::reward::Reference;
use crate::semgraph::{surface_form, Edge, SemanticGraph};

pub const DATASET_FORMAT_VERSION: u32 = 1;

/// A ground-truth walk through one graph: the entity ids it visits, the
/// relations it traverses, and its serialized surface form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantedPath {
    pub entities: Vec<usize>,
    pub relations: Vec<usize>,
    pub serialized: String,
}

/// One reasoning episode: two graphs, the query utterance, the reference
/// descriptions, and (for synthetic data) the planted walks.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskInstance {
    pub seed: u64,
    pub graph_v: SemanticGraph,
    pub graph_u: SemanticGraph,
    pub utterance: Vec<String>,
    pub reference: Reference,
    pub planted_v: Option<PlantedPath>,
    pub planted_u: Option<PlantedPath>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphParts {
    entities: Vec<Vec<String>>,
    relations: Vec<Vec<String>>,
    edges: Vec<(usize, usize, usize)>,
}

impl GraphParts {
    fn from_graph(graph: &SemanticGraph) -> Self {
        GraphParts {
            entities: graph.entity_names().to_vec(),
            relations: graph.relation_names().to_vec(),
            edges: graph
                .edges()
                .iter()
                .map(|e| (e.src, e.rel, e.dst))
                .collect(),
        }
    }

    fn into_graph(self) -> Result<SemanticGraph> {
        let edges = self
            .edges
            .into_iter()
            .map(|(src, rel, dst)| Edge { src, rel, dst })
            .collect();
        SemanticGraph::from_parts(self.entities, self.relations, edges)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceLine {
    format_version: u32,
    seed: u64,
    graph_v: GraphParts,
    graph_u: GraphParts,
    utterance: Vec<String>,
    reference: Reference,
    planted_v: Option<PlantedPath>,
    planted_u: Option<PlantedPath>,
}

/// Serialize instances as one JSON object per line.
pub fn instances_to_jsonl(instances: &[TaskInstance]) -> String {
    let mut out = String::new();
    for inst in instances {
        let line = InstanceLine {
            format_version: DATASET_FORMAT_VERSION,
            seed: inst.seed,
            graph_v: GraphParts::from_graph(&inst.graph_v),
            graph_u: GraphParts::from_graph(&inst.graph_u),
            utterance: inst.utterance.clone(),
            reference: inst.reference.clone(),
            planted_v: inst.planted_v.clone(),
            planted_u: inst.planted_u.clone(),
        };
        out.push_str(&serde_json::to_string(&line).expect("instance serialization cannot fail"));
        out.push('\n');
    }
    out
}

/// Parse a dataset from JSONL text. Blank lines are skipped; errors carry
/// 1-based line numbers.
pub fn instances_from_jsonl(text: &str) -> Result<Vec<TaskInstance>> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let line: InstanceLine =
            serde_json::from_str(raw).map_err(|e| CopathError::Parse {
                line: line_no,
                msg: e.to_string(),
            })?;
        if line.format_version != DATASET_FORMAT_VERSION {
            return Err(CopathError::Version {
                kind: "task_instance".into(),
                found: line.format_version,
                supported: DATASET_FORMAT_VERSION,
            });
        }
        out.push(TaskInstance {
            seed: line.seed,
            graph_v: line.graph_v.into_graph()?,
            graph_u: line.graph_u.into_graph()?,
            utterance: line.utterance,
            reference: line.reference,
            planted_v: line.planted_v,
            planted_u: line.planted_u,
        });
    }
    Ok(out)
}

pub fn save_instances(instances: &[TaskInstance], path: &Path) -> Result<()> {
    let mut file = std::fs::File::create(path).map_err(|e| CopathError::io(path, e))?;
    file.write_all(instances_to_jsonl(instances).as_bytes())
        .map_err(|e| CopathError::io(path, e))
}

pub fn load_instances(path: &Path) -> Result<Vec<TaskInstance>> {
    let text = std::fs::read_to_string(path).map_err(|e| CopathError::io(path, e))?;
    instances_from_jsonl(&text)
}

/// Interned surface names for one table: row order is first appearance.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VocabTable {
    names: Vec<Vec<String>>,
    index: BTreeMap<String, usize>,
}

impl VocabTable {
    pub fn from_names(names: Vec<Vec<String>>) -> Result<Self> {
        let mut table = VocabTable::default();
        for tokens in names {
            let key = surface_form(&tokens);
            if table.index.contains_key(&key) {
                return Err(CopathError::InvalidInput(format!(
                    "duplicate vocabulary name '{key}'"
                )));
            }
            table.index.insert(key, table.names.len());
            table.names.push(tokens);
        }
        Ok(table)
    }

    pub fn intern(&mut self, tokens: &[String]) -> usize {
        let key = surface_form(tokens);
        if let Some(&row) = self.index.get(&key) {
            return row;
        }
        let row = self.names.len();
        self.index.insert(key, row);
        self.names.push(tokens.to_vec());
        row
    }

    pub fn row(&self, surface: &str) -> Option<usize> {
        self.index.get(surface).copied()
    }

    pub fn names(&self) -> &[Vec<String>] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// Dataset-wide vocabulary: one table per (modality, kind).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetVocab {
    pub ent_v: VocabTable,
    pub rel_v: VocabTable,
    pub ent_u: VocabTable,
    pub rel_u: VocabTable,
}

/// Maps one instance's local graph ids to dataset-wide embedding rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Binding {
    pub ent_v: Vec<usize>,
    pub rel_v: Vec<usize>,
    pub ent_u: Vec<usize>,
    pub rel_u: Vec<usize>,
}

fn bind_table(table: &VocabTable, names: &[Vec<String>]) -> Result<Vec<usize>> {
    names
        .iter()
        .map(|tokens| {
            let key = surface_form(tokens);
            table.row(&key).ok_or_else(|| {
                CopathError::InvalidInput(format!(
                    "name '{key}' is not in the dataset vocabulary"
                ))
            })
        })
        .collect()
}

impl DatasetVocab {
    /// Intern every name of every instance, in instance order.
    pub fn from_instances(instances: &[TaskInstance]) -> Self {
        let mut vocab = DatasetVocab::default();
        for inst in instances {
            for tokens in inst.graph_v.entity_names() {
                vocab.ent_v.intern(tokens);
            }
            for tokens in inst.graph_v.relation_names() {
                vocab.rel_v.intern(tokens);
            }
            for tokens in inst.graph_u.entity_names() {
                vocab.ent_u.intern(tokens);
            }
            for tokens in inst.graph_u.relation_names() {
                vocab.rel_u.intern(tokens);
            }
        }
        vocab
    }

    /// Resolve one instance's local ids to vocabulary rows. Fails if the
    /// instance uses a name outside this vocabulary.
    pub fn bind(&self, instance: &TaskInstance) -> Result<Binding> {
        Ok(Binding {
            ent_v: bind_table(&self.ent_v, instance.graph_v.entity_names())?,
            rel_v: bind_table(&self.rel_v, instance.graph_v.relation_names())?,
            ent_u: bind_table(&self.ent_u, instance.graph_u.entity_names())?,
            rel_u: bind_table(&self.rel_u, instance.graph_u.relation_names())?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semgraph::{build_graph, TripletRecord};

    fn demo_instance(seed: u64) -> TaskInstance {
        let graph_v = build_graph(&[
            TripletRecord::new("person", "open", "door", None),
            TripletRecord::new("person", "hold", "cup", None),
        ])
        .unwrap();
        let graph_u = build_graph(&[TripletRecord::new("he", "ask about", "door", None)]).unwrap();
        TaskInstance {
            seed,
            graph_v,
            graph_u,
            utterance: vec!["did".into(), "he".into()],
            reference: Reference {
                video: vec!["person open door".into()],
                context: vec!["he ask about door".into()],
            },
            planted_v: Some(PlantedPath {
                entities: vec![0, 1],
                relations: vec![1],
                serialized: "person open door".into(),
            }),
            planted_u: None,
        }
    }

    #[test]
    fn jsonl_round_trips_byte_identically() {
        let instances = vec![demo_instance(3), demo_instance(4)];
        let text = instances_to_jsonl(&instances);
        assert_eq!(text.lines().count(), 2);
        let parsed = instances_from_jsonl(&text).unwrap();
        assert_eq!(parsed, instances);
        assert_eq!(instances_to_jsonl(&parsed), text);
    }

    #[test]
    fn blank_lines_are_skipped_and_bad_lines_are_numbered() {
        let instances = vec![demo_instance(3)];
        let mut text = instances_to_jsonl(&instances);
        text.push('\n');
        text.push_str(&instances_to_jsonl(&instances));
        assert_eq!(instances_from_jsonl(&text).unwrap().len(), 2);

        let bad = format!("{}{}\n", instances_to_jsonl(&instances), "{not json");
        let err = instances_from_jsonl(&bad).unwrap_err();
        assert!(err.to_string().contains("line 2"), "got: {err}");
    }

    #[test]
    fn unsupported_version_is_rejected() {
        let text = instances_to_jsonl(&[demo_instance(3)])
            .replace("\"format_version\":1", "\"format_version\":9");
        assert!(matches!(
            instances_from_jsonl(&text),
            Err(CopathError::Version { .. })
        ));
    }

    #[test]
    fn save_and_load_round_trip_through_a_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tasks.jsonl");
        let instances = vec![demo_instance(5)];
        save_instances(&instances, &path).unwrap();
        assert_eq!(load_instances(&path).unwrap(), instances);
    }

    #[test]
    fn vocabulary_interns_in_first_appearance_order() {
        let instances = vec![demo_instance(3), demo_instance(4)];
        let vocab = DatasetVocab::from_instances(&instances);
        // graph_v interned person, door, cup (subject/object first-touch
        // order) once; the second instance adds nothing new.
        let ent_names: Vec<String> = vocab
            .ent_v
            .names()
            .iter()
            .map(|t| surface_form(t))
            .collect();
        assert_eq!(ent_names, ["person", "door", "cup"]);
        let rel_names: Vec<String> = vocab
            .rel_v
            .names()
            .iter()
            .map(|t| surface_form(t))
            .collect();
        assert_eq!(rel_names, ["STAY", "open", "hold"]);
        assert_eq!(vocab.ent_u.len(), 2);
        assert_eq!(vocab.rel_u.len(), 2);
    }

    #[test]
    fn binding_maps_local_ids_to_vocabulary_rows() {
        let first = demo_instance(3);
        // A second instance whose graph shares "door" and "person" but
        // interns them in a different local order.
        let graph_v = build_graph(&[TripletRecord::new("door", "near", "person", None)]).unwrap();
        let second = TaskInstance {
            graph_v,
            ..first.clone()
        };
        let vocab = DatasetVocab::from_instances(&[first.clone(), second.clone()]);
        let binding = vocab.bind(&second).unwrap();
        // Locally door=0, person=1; globally person=0, door=1.
        assert_eq!(binding.ent_v, vec![1, 0]);
        // Local relations STAY=0, near=1; globally STAY=0 and near comes
        // after open and hold.
        assert_eq!(binding.rel_v, vec![0, 3]);
        assert_eq!(vocab.bind(&first).unwrap().ent_v, vec![0, 1, 2]);
    }

    #[test]
    fn binding_rejects_unknown_names() {
        let known = demo_instance(3);
        let vocab = DatasetVocab::from_instances(&[known]);
        let graph_v = build_graph(&[TripletRecord::new("alien", "probe", "door", None)]).unwrap();
        let stranger = TaskInstance {
            graph_v,
            ..demo_instance(4)
        };
        assert!(vocab.bind(&stranger).is_err());
    }

    #[test]
    fn vocab_table_rejects_duplicate_names() {
        let names = vec![vec!["a".to_string()], vec!["a".to_string()]];
        assert!(VocabTable::from_names(names).is_err());
    }
}
