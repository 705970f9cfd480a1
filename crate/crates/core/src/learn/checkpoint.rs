//! Checkpoint io: one JSON header line describing the model, followed by
//! every tensor's values as little-endian f64 bytes in manifest order.
//! Writing is byte-deterministic, so equal runs produce equal files.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::comms::CommParams;
use crate::dataset::{DatasetVocab, VocabTable};
use crate::error::{CopathError, Result};
use crate::lexicon::EmbeddingSet;
use crate::model::{
    w_a_shape, AblationMode, AgentParams, CommWiring, Dims, ModelParams, ScorerSpec, WiringKind,
};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct TensorInfo {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabNames {
    ent_v: Vec<Vec<String>>,
    rel_v: Vec<Vec<String>>,
    ent_u: Vec<Vec<String>>,
    rel_u: Vec<Vec<String>>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    format_version: u32,
    config_hash: String,
    ablation: AblationMode,
    wiring: WiringKind,
    scorer: ScorerSpec,
    dims: Dims,
    vocab: VocabNames,
    tensors: Vec<TensorInfo>,
    value_count: usize,
}

/// A checkpoint read back from disk.
pub struct LoadedCheckpoint {
    pub params: ModelParams,
    pub vocab: DatasetVocab,
    pub ablation: AblationMode,
    pub config_hash: String,
}

/// Write `params` (and the vocabulary its rows index) to one file.
pub fn save_checkpoint(
    path: &Path,
    params: &ModelParams,
    vocab: &DatasetVocab,
    ablation: AblationMode,
    config_hash: &str,
) -> Result<()> {
    for (label, table_rows, vocab_len) in [
        ("video entity", params.emb.ent_v.nrows(), vocab.ent_v.len()),
        ("video relation", params.emb.rel_v.nrows(), vocab.rel_v.len()),
        ("context entity", params.emb.ent_u.nrows(), vocab.ent_u.len()),
        (
            "context relation",
            params.emb.rel_u.nrows(),
            vocab.rel_u.len(),
        ),
    ] {
        if table_rows != vocab_len {
            return Err(CopathError::InvalidInput(format!(
                "{label} table has {table_rows} rows but the vocabulary names {vocab_len}"
            )));
        }
    }
    if ablation.wiring_kind() != params.comm.kind() {
        return Err(CopathError::InvalidInput(
            "ablation mode does not match the parameter wiring".into(),
        ));
    }
    let flat = params.flatten();
    let header = CheckpointHeader {
        format_version: CHECKPOINT_FORMAT_VERSION,
        config_hash: config_hash.to_string(),
        ablation,
        wiring: params.comm.kind(),
        scorer: params.scorer,
        dims: params.dims,
        vocab: VocabNames {
            ent_v: vocab.ent_v.names().to_vec(),
            rel_v: vocab.rel_v.names().to_vec(),
            ent_u: vocab.ent_u.names().to_vec(),
            rel_u: vocab.rel_u.names().to_vec(),
        },
        tensors: params
            .manifest()
            .into_iter()
            .map(|(name, shape)| TensorInfo { name, shape })
            .collect(),
        value_count: flat.len(),
    };
    let mut bytes = serde_json::to_vec(&header)
        .map_err(|e| CopathError::InvalidInput(format!("cannot serialize header: {e}")))?;
    bytes.push(b'\n');
    bytes.reserve(flat.len() * 8);
    for value in &flat {
        bytes.extend_from_slice(&value.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| CopathError::io(path, e))
}

/// Read a checkpoint back. The header fully determines every tensor shape;
/// the blob must match it exactly.
pub fn load_checkpoint(path: &Path) -> Result<LoadedCheckpoint> {
    let bytes = fs::read(path).map_err(|e| CopathError::io(path, e))?;
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| CopathError::Parse {
            line: 1,
            msg: "checkpoint has no header line".into(),
        })?;
    let header: CheckpointHeader =
        serde_json::from_slice(&bytes[..newline]).map_err(|e| CopathError::Parse {
            line: 1,
            msg: format!("bad checkpoint header: {e}"),
        })?;
    if header.format_version != CHECKPOINT_FORMAT_VERSION {
        return Err(CopathError::Version {
            kind: "checkpoint".into(),
            found: header.format_version,
            supported: CHECKPOINT_FORMAT_VERSION,
        });
    }
    header.dims.validate()?;
    if header.wiring != header.ablation.wiring_kind() {
        return Err(CopathError::InvalidInput(
            "checkpoint wiring does not match its ablation mode".into(),
        ));
    }

    let vocab = DatasetVocab {
        ent_v: VocabTable::from_names(header.vocab.ent_v)?,
        rel_v: VocabTable::from_names(header.vocab.rel_v)?,
        ent_u: VocabTable::from_names(header.vocab.ent_u)?,
        rel_u: VocabTable::from_names(header.vocab.rel_u)?,
    };

    let dims = header.dims;
    let d = dims.embed;
    let zero_comm = |concat: usize| {
        let z = dims.comm_input + dims.hidden;
        CommParams {
            w_c: Array2::zeros((dims.comm_input, concat)),
            w_i: Array2::zeros((dims.hidden, z)),
            b_i: ndarray::Array1::zeros(dims.hidden),
            w_f: Array2::zeros((dims.hidden, z)),
            b_f: ndarray::Array1::zeros(dims.hidden),
            w_o: Array2::zeros((dims.hidden, z)),
            b_o: ndarray::Array1::zeros(dims.hidden),
            w_g: Array2::zeros((dims.hidden, z)),
            b_g: ndarray::Array1::zeros(dims.hidden),
        }
    };
    let comm = match header.wiring {
        WiringKind::Shared => CommWiring::Shared(zero_comm(4 * d)),
        WiringKind::Private => CommWiring::Private {
            video: zero_comm(2 * d),
            context: zero_comm(2 * d),
        },
    };
    let shape = w_a_shape(dims, header.scorer.kind);
    let mut params = ModelParams {
        dims,
        emb: EmbeddingSet {
            dim: d,
            ent_v: Array2::zeros((vocab.ent_v.len(), d)),
            rel_v: Array2::zeros((vocab.rel_v.len(), d)),
            ent_u: Array2::zeros((vocab.ent_u.len(), d)),
            rel_u: Array2::zeros((vocab.rel_u.len(), d)),
        },
        comm,
        agent_v: AgentParams {
            w_a: Array2::zeros(shape),
        },
        agent_u: AgentParams {
            w_a: Array2::zeros(shape),
        },
        scorer: header.scorer,
    };

    let expected: Vec<TensorInfo> = params
        .manifest()
        .into_iter()
        .map(|(name, shape)| TensorInfo { name, shape })
        .collect();
    if expected.len() != header.tensors.len()
        || expected
            .iter()
            .zip(&header.tensors)
            .any(|(a, b)| a.name != b.name || a.shape != b.shape)
    {
        return Err(CopathError::InvalidInput(
            "checkpoint tensor manifest does not match its own header metadata".into(),
        ));
    }
    if header.value_count != params.param_count() {
        return Err(CopathError::InvalidInput(format!(
            "checkpoint declares {} values but its shapes need {}",
            header.value_count,
            params.param_count()
        )));
    }

    let blob = &bytes[newline + 1..];
    if blob.len() != header.value_count * 8 {
        return Err(CopathError::InvalidInput(format!(
            "checkpoint blob holds {} bytes, expected {}",
            blob.len(),
            header.value_count * 8
        )));
    }
    let mut flat = Vec::with_capacity(header.value_count);
    for chunk in blob.chunks_exact(8) {
        flat.push(f64::from_le_bytes(chunk.try_into().expect("8-byte chunk")));
    }
    params.assign_from_flat(&flat)?;
    Ok(LoadedCheckpoint {
        params,
        vocab,
        ablation: header.ablation,
        config_hash: header.config_hash,
    })
}
