use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{GatConfig, SentimentGat};
use crate::error::{Error, Result};

const FORMAT: &str = "disagree-gat-checkpoint/1";

#[derive(Serialize, Deserialize)]
struct ParamRecord {
    name: String,
    shape: [usize; 2],
    /// Shortest round-trip decimal form of each f64.
    values: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    config: GatConfig,
    seed: u64,
    parameters: Vec<ParamRecord>,
}

pub fn checkpoint_json(model: &SentimentGat, seed: u64) -> Result<String> {
    let file = CheckpointFile {
        format: FORMAT.to_string(),
        config: model.config,
        seed,
        parameters: model
            .named_params()
            .into_iter()
            .map(|(name, p)| ParamRecord {
                name,
                shape: [p.value.rows(), p.value.cols()],
                values: p.value.as_slice().iter().map(|v| v.to_string()).collect(),
            })
            .collect(),
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

pub fn save_checkpoint(model: &SentimentGat, seed: u64, path: &Path) -> Result<()> {
    fs::write(path, checkpoint_json(model, seed)?).map_err(|e| Error::io(path, e))
}

/// Rebuilds a model from checkpoint text, checking every shape against the
/// embedded config. Returns the model and its training seed.
pub fn parse_checkpoint(text: &str) -> Result<(SentimentGat, u64)> {
    let file: CheckpointFile =
        serde_json::from_str(text).map_err(|e| Error::SchemaMismatch(format!("unreadable checkpoint: {e}")))?;
    if file.format != FORMAT {
        return Err(Error::SchemaMismatch(format!("format `{}`, expected `{FORMAT}`", file.format)));
    }
    let mut model = SentimentGat::zeros(file.config)?;
    let expected: Vec<(String, (usize, usize))> =
        model.named_params().into_iter().map(|(n, p)| (n, p.shape())).collect();
    if expected.len() != file.parameters.len() {
        return Err(Error::SchemaMismatch(format!(
            "{} parameters, config implies {}",
            file.parameters.len(),
            expected.len()
        )));
    }
    for ((name, shape), (record, param)) in expected.iter().zip(file.parameters.iter().zip(model.params_mut())) {
        let got = (record.shape[0], record.shape[1]);
        if &record.name != name || got != *shape || record.values.len() != shape.0 * shape.1 {
            return Err(Error::SchemaMismatch(format!(
                "parameter `{}` {:?} ({} values) does not match `{name}` {:?}",
                record.name,
                got,
                record.values.len(),
                shape
            )));
        }
        for (dst, s) in param.value.as_mut_slice().iter_mut().zip(&record.values) {
            *dst = s
                .parse()
                .map_err(|_| Error::SchemaMismatch(format!("`{name}`: bad value `{s}`")))?;
        }
        if !param.value.is_finite() {
            return Err(Error::SchemaMismatch(format!("`{name}` has non-finite values")));
        }
    }
    Ok((model, file.seed))
}

pub fn load_checkpoint(path: &Path) -> Result<(SentimentGat, u64)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_checkpoint(&text)
}
