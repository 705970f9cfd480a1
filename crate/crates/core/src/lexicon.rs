//! Word vectors and embedding tables.
//!
//! Pre-trained word vectors ground three things: entity merging (cosine
//! similarity in `semgraph`), utterance embeddings (query-entity selection),
//! and the initialization of the trainable entity/relation embedding tables
//! (mean of name-token vectors plus a small seeded uniform noise).

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{CopathError, Result};
use crate::seeding;

/// Token-to-vector lookup table with a fixed dimension.
///
/// Entries keep their insertion order so that saving is deterministic;
/// lookups of unknown tokens return `None` (callers substitute zero).
#[derive(Debug, Clone)]
pub struct WordVectors {
    dim: usize,
    entries: Vec<(String, Vec<f64>)>,
    index: HashMap<String, usize>,
}

impl WordVectors {
    /// Build a table from (token, vector) pairs. All vectors must share one
    /// dimension and tokens must be unique.
    pub fn from_entries(entries: Vec<(String, Vec<f64>)>) -> Result<Self> {
        let dim = entries.first().map(|(_, v)| v.len()).unwrap_or(0);
        let mut index = HashMap::with_capacity(entries.len());
        for (i, (token, vector)) in entries.iter().enumerate() {
            if vector.len() != dim {
                return Err(CopathError::InvalidInput(format!(
                    "vector for '{token}' has dimension {} but the table uses {dim}",
                    vector.len()
                )));
            }
            if index.insert(token.clone(), i).is_some() {
                return Err(CopathError::InvalidInput(format!(
                    "duplicate word-vector entry for token '{token}'"
                )));
            }
        }
        Ok(WordVectors {
            dim,
            entries,
            index,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Vector for `token`, or `None` when out-of-vocabulary.
    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.index.get(token).map(|&i| self.entries[i].1.as_slice())
    }

    /// Entries in insertion order.
    pub fn entries(&self) -> &[(String, Vec<f64>)] {
        &self.entries
    }
}

/// Parse the text format: one `token v1 v2 … vd` line per entry, dimension
/// fixed by the first line.
pub fn parse_word_vectors(text: &str) -> Result<WordVectors> {
    let mut entries = Vec::new();
    let mut dim: Option<usize> = None;
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let token = parts
            .next()
            .expect("non-blank line has at least one field")
            .to_string();
        let values: Vec<f64> = parts
            .map(|p| {
                p.parse::<f64>().map_err(|_| CopathError::Parse {
                    line: idx + 1,
                    msg: format!("'{p}' is not a number"),
                })
            })
            .collect::<Result<_>>()?;
        if values.is_empty() {
            return Err(CopathError::Parse {
                line: idx + 1,
                msg: "line has a token but no vector components".into(),
            });
        }
        match dim {
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(CopathError::Parse {
                    line: idx + 1,
                    msg: format!("expected {d} components, found {}", values.len()),
                })
            }
            _ => {}
        }
        entries.push((token, values));
    }
    WordVectors::from_entries(entries).map_err(|e| match e {
        CopathError::InvalidInput(msg) => CopathError::Parse { line: 0, msg },
        other => other,
    })
}

/// Load word vectors from a file (see [`parse_word_vectors`]).
pub fn load_word_vectors(path: &Path) -> Result<WordVectors> {
    let text = std::fs::read_to_string(path).map_err(|e| CopathError::io(path, e))?;
    parse_word_vectors(&text)
}

/// Write word vectors in the text format, in insertion order.
pub fn save_word_vectors(vectors: &WordVectors, path: &Path) -> Result<()> {
    let mut out = String::new();
    for (token, values) in vectors.entries() {
        out.push_str(token);
        for v in values {
            out.push(' ');
            out.push_str(&format!("{v}"));
        }
        out.push('\n');
    }
    let mut file = std::fs::File::create(path).map_err(|e| CopathError::io(path, e))?;
    file.write_all(out.as_bytes())
        .map_err(|e| CopathError::io(path, e))
}

/// Mean of the in-vocabulary token vectors of an utterance. An utterance
/// whose tokens are all out-of-vocabulary embeds to the zero vector; an
/// empty token list is an error.
pub fn embed_utterance(tokens: &[String], vectors: &WordVectors) -> Result<Array1<f64>> {
    if tokens.is_empty() {
        return Err(CopathError::InvalidInput(
            "cannot embed an empty utterance".into(),
        ));
    }
    if vectors.is_empty() {
        return Err(CopathError::InvalidInput(
            "word-vector table is empty; utterance embedding has no dimension".into(),
        ));
    }
    let mut sum = Array1::<f64>::zeros(vectors.dim());
    let mut hits = 0usize;
    for token in tokens {
        if let Some(v) = vectors.get(token) {
            for (s, x) in sum.iter_mut().zip(v) {
                *s += x;
            }
            hits += 1;
        }
    }
    if hits > 0 {
        sum.mapv_inplace(|x| x / hits as f64);
    }
    Ok(sum)
}

/// Trainable embedding tables for both modalities: one row per entity and
/// per relation of each graph vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub dim: usize,
    pub ent_v: Array2<f64>,
    pub rel_v: Array2<f64>,
    pub ent_u: Array2<f64>,
    pub rel_u: Array2<f64>,
}

/// Build one embedding table: row i = mean word vector of name i's
/// in-vocabulary tokens plus per-coordinate uniform noise in
/// [-noise_amp, noise_amp]. Names with no in-vocabulary token (STAY, unseen
/// symbols) get a pure-noise row.
pub fn embedding_table(
    names: &[Vec<String>],
    vectors: &WordVectors,
    dim: usize,
    noise_amp: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Array2<f64>> {
    if dim == 0 {
        return Err(CopathError::InvalidInput(
            "embedding dimension must be positive".into(),
        ));
    }
    if !vectors.is_empty() && vectors.dim() != dim {
        return Err(CopathError::InvalidInput(format!(
            "word vectors have dimension {} but embeddings are configured for {dim}",
            vectors.dim()
        )));
    }
    if noise_amp < 0.0 || !noise_amp.is_finite() {
        return Err(CopathError::InvalidInput(format!(
            "noise amplitude must be a non-negative finite number, got {noise_amp}"
        )));
    }
    let mut table = Array2::<f64>::zeros((names.len(), dim));
    for (i, tokens) in names.iter().enumerate() {
        let rows: Vec<&[f64]> = tokens.iter().filter_map(|t| vectors.get(t)).collect();
        if !rows.is_empty() {
            for row in &rows {
                for (j, v) in row.iter().enumerate() {
                    table[(i, j)] += v;
                }
            }
            let n = rows.len() as f64;
            for j in 0..dim {
                table[(i, j)] /= n;
            }
        }
        if noise_amp > 0.0 {
            for j in 0..dim {
                table[(i, j)] += rng.gen_range(-noise_amp..=noise_amp);
            }
        }
    }
    Ok(table)
}

/// Initialize embedding tables for a single graph pair. Table seeds are
/// derived from `seed` per (modality, kind), so the result is a pure
/// function of (names, vectors, seed).
#[allow(clippy::too_many_arguments)]
pub fn init_embeddings(
    entities_v: &[Vec<String>],
    relations_v: &[Vec<String>],
    entities_u: &[Vec<String>],
    relations_u: &[Vec<String>],
    vectors: &WordVectors,
    dim: usize,
    noise_amp: f64,
    seed: u64,
) -> Result<EmbeddingSet> {
    let make = |names: &[Vec<String>], stream: u64| {
        let mut rng = seeding::rng_from(seeding::mix(seed, stream));
        embedding_table(names, vectors, dim, noise_amp, &mut rng)
    };
    Ok(EmbeddingSet {
        dim,
        ent_v: make(entities_v, 0)?,
        rel_v: make(relations_v, 1)?,
        ent_u: make(entities_u, 2)?,
        rel_u: make(relations_u, 3)?,
    })
}

/// Pick the query entity: the row (among `rows`, positions into `table`)
/// with the largest dot product against the utterance embedding. Ties keep
/// the earliest position, so a zero utterance embedding yields index 0.
pub fn select_query_entity(
    table: &Array2<f64>,
    rows: &[usize],
    utterance: &Array1<f64>,
) -> Result<usize> {
    if rows.is_empty() {
        return Err(CopathError::InvalidInput(
            "cannot select a query entity from an empty entity set".into(),
        ));
    }
    if utterance.len() != table.ncols() {
        return Err(CopathError::InvalidInput(format!(
            "utterance embedding has dimension {} but the table uses {}",
            utterance.len(),
            table.ncols()
        )));
    }
    let mut best = 0usize;
    let mut best_score = f64::NEG_INFINITY;
    for (pos, &row) in rows.iter().enumerate() {
        if row >= table.nrows() {
            return Err(CopathError::InvalidInput(format!(
                "entity row {row} is outside the embedding table ({} rows)",
                table.nrows()
            )));
        }
        let score: f64 = table.row(row).dot(utterance);
        if !score.is_finite() {
            return Err(CopathError::Numeric(format!(
                "non-finite query score for entity row {row}"
            )));
        }
        if score > best_score {
            best_score = score;
            best = pos;
        }
    }
    Ok(best)
}
