//! Binary containers for checkpoints and feature matrices.
//!
//! Both formats share one frame: magic bytes, a format version, the schema
//! digest as 64 hex bytes, a length-prefixed JSON header, and a raw
//! little-endian f64 payload whose length the header pins down. Files are
//! self-describing and byte-stable across platforms.
//!
//! Writes go to `<path>.partial` and are renamed into place, so a crash
//! never leaves a plausible-looking truncated artifact.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::batchnorm::BatchNormParams;
use crate::nn::dense::DenseParams;
use crate::nn::lstm::LstmParams;
use crate::nn::model::{ModelParams, DENSE_UNITS, HIDDEN1, HIDDEN2};
use crate::pipeline::feature::FeatureMatrix;
use crate::pipeline::schema::{FeatureLayout, FeatureMode, FeatureSchema};
use crate::pipeline::split::DatasetSplit;
use crate::tensor::Matrix;
use crate::trainer::{Checkpoint, TrainConfig};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"IFCK";
pub const MATRIX_MAGIC: &[u8; 4] = b"IFFM";
pub const FORMAT_VERSION: u32 = 1;

/// Writes bytes to `<path>.partial`, then renames into place.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let partial = partial_path(path);
    {
        let mut file = fs::File::create(&partial)?;
        file.write_all(bytes)?;
        file.sync_all()?;
    }
    fs::rename(&partial, path)?;
    Ok(())
}

fn partial_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".partial");
    path.with_file_name(name)
}

fn frame(magic: &[u8; 4], digest: &str, header: &[u8], payload: &[f64]) -> Result<Vec<u8>> {
    if digest.len() != 64 || !digest.bytes().all(|b| b.is_ascii_hexdigit()) {
        return Err(Error::Corrupt(format!(
            "schema digest must be 64 hex characters, got {digest:?}"
        )));
    }
    let mut out = Vec::with_capacity(4 + 4 + 64 + 8 + header.len() + payload.len() * 8);
    out.extend_from_slice(magic);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(digest.as_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(header);
    for v in payload {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

struct Frame {
    digest: String,
    header: Vec<u8>,
    payload: Vec<f64>,
}

fn read_frame(bytes: &[u8], magic: &[u8; 4], what: &str) -> Result<Frame> {
    let need = |n: usize| -> Result<()> {
        if bytes.len() < n {
            Err(Error::Corrupt(format!("{what}: truncated file")))
        } else {
            Ok(())
        }
    };
    need(4 + 4 + 64 + 8)?;
    if &bytes[0..4] != magic {
        return Err(Error::Corrupt(format!(
            "{what}: bad magic {:?}",
            &bytes[0..4]
        )));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::Corrupt(format!(
            "{what}: unsupported format version {version}"
        )));
    }
    let digest = std::str::from_utf8(&bytes[8..72])
        .map_err(|_| Error::Corrupt(format!("{what}: digest is not ASCII")))?
        .to_string();
    let header_len = usize::try_from(u64::from_le_bytes(bytes[72..80].try_into().unwrap()))
        .map_err(|_| Error::Corrupt(format!("{what}: header length does not fit")))?;
    let header_end = 80usize
        .checked_add(header_len)
        .ok_or_else(|| Error::Corrupt(format!("{what}: header length overflows")))?;
    need(header_end)?;
    let header = bytes[80..header_end].to_vec();
    let rest = &bytes[header_end..];
    if !rest.len().is_multiple_of(8) {
        return Err(Error::Corrupt(format!(
            "{what}: payload is not f64-aligned"
        )));
    }
    let payload = rest
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Frame {
        digest,
        header,
        payload,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
    offset: usize,
    len: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointHeader {
    schema_digest: String,
    schema: FeatureSchema,
    config: TrainConfig,
    best_epoch: usize,
    val_loss: f64,
    dropout_rate: f64,
    tensors: Vec<TensorEntry>,
}

pub fn checkpoint_to_bytes(checkpoint: &Checkpoint, schema: &FeatureSchema) -> Result<Vec<u8>> {
    if schema.digest() != checkpoint.schema_digest {
        return Err(Error::IncompatibleArtifacts(format!(
            "schema digest {} does not match checkpoint digest {}",
            schema.digest(),
            checkpoint.schema_digest
        )));
    }
    let mut tensors = Vec::new();
    let mut payload = Vec::new();
    for (name, tensor) in checkpoint.params.all_tensors() {
        tensors.push(TensorEntry {
            name: name.to_string(),
            rows: tensor.rows(),
            cols: tensor.cols(),
            offset: payload.len(),
            len: tensor.len(),
        });
        payload.extend_from_slice(tensor.data());
    }
    let header = CheckpointHeader {
        schema_digest: checkpoint.schema_digest.clone(),
        schema: schema.clone(),
        config: checkpoint.config.clone(),
        best_epoch: checkpoint.best_epoch,
        val_loss: checkpoint.val_loss,
        dropout_rate: checkpoint.params.dropout_rate,
        tensors,
    };
    frame(
        CHECKPOINT_MAGIC,
        &checkpoint.schema_digest,
        &serde_json::to_vec(&header)?,
        &payload,
    )
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint, schema: &FeatureSchema) -> Result<()> {
    atomic_write(path, &checkpoint_to_bytes(checkpoint, schema)?)
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<(Checkpoint, FeatureSchema)> {
    let frame = read_frame(bytes, CHECKPOINT_MAGIC, "checkpoint")?;
    let header: CheckpointHeader = serde_json::from_slice(&frame.header)?;
    if header.schema_digest != frame.digest {
        return Err(Error::Corrupt(
            "checkpoint: header digest disagrees with frame digest".to_string(),
        ));
    }
    if header.schema.digest() != header.schema_digest {
        return Err(Error::Corrupt(
            "checkpoint: embedded schema does not hash to the recorded digest".to_string(),
        ));
    }
    let expected_len: usize = header.tensors.iter().map(|t| t.len).sum();
    if frame.payload.len() != expected_len {
        return Err(Error::Corrupt(format!(
            "checkpoint: payload holds {} floats, directory expects {expected_len}",
            frame.payload.len()
        )));
    }

    let state_size = header
        .tensors
        .iter()
        .find(|t| t.name == "lstm1.w_input")
        .map(|t| t.cols)
        .ok_or_else(|| Error::Corrupt("checkpoint: missing lstm1.w_input".to_string()))?;

    let mut params = ModelParams {
        lstm1: LstmParams::zeros(state_size, HIDDEN1),
        bn1: BatchNormParams::new(HIDDEN1),
        lstm2: LstmParams::zeros(HIDDEN1, HIDDEN2),
        bn2: BatchNormParams::new(HIDDEN2),
        dense1: DenseParams {
            w: Matrix::zeros(DENSE_UNITS, HIDDEN2),
            b: Matrix::zeros(1, DENSE_UNITS),
        },
        bn3: BatchNormParams::new(DENSE_UNITS),
        dense2: DenseParams {
            w: Matrix::zeros(1, DENSE_UNITS),
            b: Matrix::zeros(1, 1),
        },
        dropout_rate: header.dropout_rate,
    };
    for (name, tensor) in params.all_tensors_mut() {
        let entry = header
            .tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::Corrupt(format!("checkpoint: missing tensor {name}")))?;
        if (entry.rows, entry.cols) != tensor.shape() || entry.len != tensor.len() {
            return Err(Error::Corrupt(format!(
                "checkpoint: tensor {name} has shape {}x{}, expected {:?}",
                entry.rows,
                entry.cols,
                tensor.shape()
            )));
        }
        let end = entry
            .offset
            .checked_add(entry.len)
            .filter(|&end| end <= frame.payload.len())
            .ok_or_else(|| {
                Error::Corrupt(format!(
                    "checkpoint: tensor {name} points outside the payload"
                ))
            })?;
        tensor
            .data_mut()
            .copy_from_slice(&frame.payload[entry.offset..end]);
    }

    Ok((
        Checkpoint {
            params,
            schema_digest: header.schema_digest,
            config: header.config,
            best_epoch: header.best_epoch,
            val_loss: header.val_loss,
        },
        header.schema,
    ))
}

pub fn load_checkpoint(path: &Path) -> Result<(Checkpoint, FeatureSchema)> {
    checkpoint_from_bytes(&fs::read(path)?)
}

#[derive(Debug, Serialize, Deserialize)]
struct MatrixHeader {
    mode: FeatureMode,
    rows: usize,
    cols: usize,
    labels: Vec<f64>,
    session_ids: Vec<String>,
    user_ids: Vec<String>,
    session_ranges: Vec<(usize, usize)>,
    layout: FeatureLayout,
    schema_digest: String,
}

pub fn matrix_to_bytes(matrix: &FeatureMatrix) -> Result<Vec<u8>> {
    let header = MatrixHeader {
        mode: matrix.mode,
        rows: matrix.n_rows(),
        cols: matrix.width(),
        labels: matrix.labels.clone(),
        session_ids: matrix.session_ids.clone(),
        user_ids: matrix.user_ids.clone(),
        session_ranges: matrix.session_ranges.clone(),
        layout: matrix.layout.clone(),
        schema_digest: matrix.schema_digest.clone(),
    };
    frame(
        MATRIX_MAGIC,
        &matrix.schema_digest,
        &serde_json::to_vec(&header)?,
        matrix.rows.data(),
    )
}

pub fn matrix_from_bytes(bytes: &[u8]) -> Result<FeatureMatrix> {
    let frame = read_frame(bytes, MATRIX_MAGIC, "feature matrix")?;
    let header: MatrixHeader = serde_json::from_slice(&frame.header)?;
    if header.schema_digest != frame.digest {
        return Err(Error::Corrupt(
            "feature matrix: header digest disagrees with frame digest".to_string(),
        ));
    }
    if frame.payload.len() != header.rows * header.cols {
        return Err(Error::Corrupt(format!(
            "feature matrix: payload holds {} floats, header expects {}",
            frame.payload.len(),
            header.rows * header.cols
        )));
    }
    Ok(FeatureMatrix {
        mode: header.mode,
        rows: Matrix::from_vec(header.rows, header.cols, frame.payload)?,
        labels: header.labels,
        session_ids: header.session_ids,
        user_ids: header.user_ids,
        session_ranges: header.session_ranges,
        layout: header.layout,
        schema_digest: header.schema_digest,
    })
}

pub fn save_matrix(path: &Path, matrix: &FeatureMatrix) -> Result<()> {
    atomic_write(path, &matrix_to_bytes(matrix)?)
}

pub fn load_matrix(path: &Path) -> Result<FeatureMatrix> {
    matrix_from_bytes(&fs::read(path)?)
}

#[derive(Debug, Serialize, Deserialize)]
struct SplitManifest {
    fractions: (f64, f64, f64),
    seed: u64,
}

/// Persists a split as a directory: schema.json, split.json, and one .ifm
/// container per part.
pub fn save_split(dir: &Path, split: &DatasetSplit, schema: &FeatureSchema) -> Result<()> {
    fs::create_dir_all(dir)?;
    atomic_write(
        &dir.join("schema.json"),
        &serde_json::to_vec_pretty(schema)?,
    )?;
    atomic_write(
        &dir.join("split.json"),
        &serde_json::to_vec_pretty(&SplitManifest {
            fractions: split.fractions,
            seed: split.seed,
        })?,
    )?;
    save_matrix(&dir.join("train.ifm"), &split.train)?;
    save_matrix(&dir.join("validation.ifm"), &split.validation)?;
    save_matrix(&dir.join("test.ifm"), &split.test)?;
    Ok(())
}

pub fn load_split(dir: &Path) -> Result<(DatasetSplit, FeatureSchema)> {
    let schema: FeatureSchema = serde_json::from_slice(&fs::read(dir.join("schema.json"))?)?;
    let manifest: SplitManifest = serde_json::from_slice(&fs::read(dir.join("split.json"))?)?;
    let split = DatasetSplit {
        train: load_matrix(&dir.join("train.ifm"))?,
        validation: load_matrix(&dir.join("validation.ifm"))?,
        test: load_matrix(&dir.join("test.ifm"))?,
        fractions: manifest.fractions,
        seed: manifest.seed,
    };
    let digest = schema.digest();
    for part in [&split.train, &split.validation, &split.test] {
        if part.schema_digest != digest {
            return Err(Error::IncompatibleArtifacts(
                "split parts were produced with a different schema".to_string(),
            ));
        }
    }
    Ok((split, schema))
}
