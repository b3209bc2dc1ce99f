use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{LstmNetwork, LstmParams, Scaler, TrainConfig};
use crate::error::{Error, Result};

pub const NETWORK_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Tensor {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkFile {
    format: String,
    version: u32,
    features: usize,
    config: TrainConfig,
    scaler: Scaler,
    tensors: Vec<Tensor>,
}

const FORMAT: &str = "mixfreq-lstm";

pub(crate) fn to_json(net: &LstmNetwork) -> Result<String> {
    let p = &net.params;
    let tensors = p
        .tensors()
        .into_iter()
        .map(|(name, shape, range)| Tensor {
            name,
            shape,
            data: p.data[range].to_vec(),
        })
        .collect();
    let file = NetworkFile {
        format: FORMAT.into(),
        version: NETWORK_FORMAT_VERSION,
        features: p.features(),
        config: net.config.clone(),
        scaler: net.scaler.clone(),
        tensors,
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

pub(crate) fn from_json(text: &str) -> Result<LstmNetwork> {
    let file: NetworkFile = serde_json::from_str(text)?;
    if file.format != FORMAT {
        return Err(Error::Parse(format!("not a network file: format `{}`", file.format)));
    }
    if file.version != NETWORK_FORMAT_VERSION {
        return Err(Error::Parse(format!(
            "unsupported network file version {}",
            file.version
        )));
    }
    let mut params = LstmParams::zeros(file.features, &file.config.cells, file.config.peepholes)?;
    let expected = params.tensors();
    if expected.len() != file.tensors.len() {
        return Err(Error::Parse(format!(
            "expected {} tensors, found {}",
            expected.len(),
            file.tensors.len()
        )));
    }
    for ((name, shape, range), t) in expected.into_iter().zip(&file.tensors) {
        if t.name != name || t.shape != shape || t.data.len() != range.len() {
            return Err(Error::Parse(format!(
                "tensor `{}` {:?} does not match expected `{name}` {shape:?}",
                t.name, t.shape
            )));
        }
        if t.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parse(format!("tensor `{name}` has non-finite entries")));
        }
        params.data[range].copy_from_slice(&t.data);
    }
    if file.scaler.mean.len() != file.features || file.scaler.sd.len() != file.features {
        return Err(Error::Parse("scaler size does not match feature count".into()));
    }
    Ok(LstmNetwork {
        params,
        config: file.config,
        scaler: file.scaler,
    })
}

/// Writes a network as JSON: format tag, version, training config, scaler and
/// named row-major tensors with their shapes.
pub fn save_network(net: &LstmNetwork, path: &Path) -> Result<()> {
    std::fs::write(path, to_json(net)?)?;
    Ok(())
}

pub fn load_network(path: &Path) -> Result<LstmNetwork> {
    from_json(&std::fs::read_to_string(path)?)
}
