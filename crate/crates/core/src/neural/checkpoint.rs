//! JSON model checkpoints.
//!
//! A checkpoint stores the training configuration, the vocabulary
//! constants, and every tensor by name in a fixed order. Values round-trip
//! bit for bit: serde_json prints the shortest decimal that parses back to
//! the same f64.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write as _};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SchedError};

use super::params::ModelParams;
use super::train::TrainConfig;
use super::{OUTPUT_CLASSES, PAD_TOKEN, START_TOKEN, VOCAB_SIZE};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct VocabBlock {
    pad_token: usize,
    start_token: usize,
    vocab_size: usize,
    output_classes: usize,
}

impl VocabBlock {
    fn current() -> Self {
        VocabBlock {
            pad_token: PAD_TOKEN,
            start_token: START_TOKEN,
            vocab_size: VOCAB_SIZE,
            output_classes: OUTPUT_CLASSES,
        }
    }

    fn check(&self) -> Result<()> {
        let expect = VocabBlock::current();
        if self.pad_token != expect.pad_token
            || self.start_token != expect.start_token
            || self.vocab_size != expect.vocab_size
            || self.output_classes != expect.output_classes
        {
            return Err(SchedError::BadCheckpoint(format!(
                "vocabulary mismatch: file has pad={} start={} vocab={} classes={}",
                self.pad_token, self.start_token, self.vocab_size, self.output_classes
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorBlock {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointFile {
    format_version: u32,
    train_config: TrainConfig,
    vocab: VocabBlock,
    tensors: Vec<TensorBlock>,
}

/// Write `params` plus the configuration that produced them.
pub fn save_checkpoint(path: &Path, params: &ModelParams, cfg: &TrainConfig) -> Result<()> {
    if !params.all_finite() {
        return Err(SchedError::BadCheckpoint(
            "refusing to save non-finite parameters".into(),
        ));
    }
    if params.embed_dim != cfg.embed_dim || params.hidden_dim != cfg.hidden_dim {
        return Err(SchedError::BadCheckpoint(format!(
            "parameter dims {}x{} disagree with config {}x{}",
            params.embed_dim, params.hidden_dim, cfg.embed_dim, cfg.hidden_dim
        )));
    }
    let shapes = params.named_shapes();
    let flat = params.flatten();
    let mut tensors = Vec::with_capacity(shapes.len());
    let mut offset = 0;
    for (name, shape) in shapes {
        let count: usize = shape.iter().product();
        tensors.push(TensorBlock {
            name: name.to_string(),
            shape,
            data: flat[offset..offset + count].to_vec(),
        });
        offset += count;
    }
    let file = CheckpointFile {
        format_version: CHECKPOINT_FORMAT_VERSION,
        train_config: *cfg,
        vocab: VocabBlock::current(),
        tensors,
    };
    let out = File::create(path).map_err(|e| SchedError::io(path, e))?;
    let mut out = BufWriter::new(out);
    serde_json::to_writer_pretty(&mut out, &file).map_err(|e| SchedError::json(path, e))?;
    out.write_all(b"\n").map_err(|e| SchedError::io(path, e))?;
    out.flush().map_err(|e| SchedError::io(path, e))?;
    Ok(())
}

/// Read a checkpoint back, verifying version, vocabulary, tensor names,
/// shapes, and finiteness.
pub fn load_checkpoint(path: &Path) -> Result<(ModelParams, TrainConfig)> {
    let file = File::open(path).map_err(|e| SchedError::io(path, e))?;
    let file: CheckpointFile =
        serde_json::from_reader(BufReader::new(file)).map_err(|e| SchedError::json(path, e))?;
    if file.format_version != CHECKPOINT_FORMAT_VERSION {
        return Err(SchedError::BadCheckpoint(format!(
            "format version {} (this build reads {})",
            file.format_version, CHECKPOINT_FORMAT_VERSION
        )));
    }
    file.vocab.check()?;
    let cfg = file.train_config;
    cfg.validate()?;

    let reference = ModelParams::init(cfg.embed_dim, cfg.hidden_dim, 0)?;
    let expected = reference.named_shapes();
    if file.tensors.len() != expected.len() {
        return Err(SchedError::BadCheckpoint(format!(
            "expected {} tensors, found {}",
            expected.len(),
            file.tensors.len()
        )));
    }
    let mut flat = Vec::new();
    for (block, (name, shape)) in file.tensors.iter().zip(&expected) {
        if block.name != *name {
            return Err(SchedError::BadCheckpoint(format!(
                "tensor {:?} where {name:?} was expected",
                block.name
            )));
        }
        if block.shape != *shape {
            return Err(SchedError::BadCheckpoint(format!(
                "tensor {name:?} has shape {:?}, expected {shape:?}",
                block.shape
            )));
        }
        let count: usize = shape.iter().product();
        if block.data.len() != count {
            return Err(SchedError::BadCheckpoint(format!(
                "tensor {name:?} carries {} values for shape {shape:?}",
                block.data.len()
            )));
        }
        if block.data.iter().any(|v| !v.is_finite()) {
            return Err(SchedError::BadCheckpoint(format!(
                "tensor {name:?} contains non-finite values"
            )));
        }
        flat.extend_from_slice(&block.data);
    }
    let params = ModelParams::from_flat(cfg.embed_dim, cfg.hidden_dim, &flat)?;
    Ok((params, cfg))
}
