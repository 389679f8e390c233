//! Parameter checkpoints.
//!
//! A checkpoint is one JSON document:
//!
//! ```text
//! {
//!   "format": "banditmatch-checkpoint",
//!   "version": "v1",
//!   "spec": { "input_dim": .., "hidden_dims": [..], "output_dim": .., "hidden_activation": "relu" },
//!   "metadata": { "role": "frozen", .. },
//!   "tensors": [ { "name": "layers.0.weight", "shape": [rows, cols], "values": [row-major f64] }, .. ]
//! }
//! ```
//!
//! Floats are written in shortest round-trip form, so loading restores every
//! parameter bit for bit.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::mlp::{Mlp, MlpSpec};
use super::tensor::{ParamSet, ParamTensor};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "banditmatch-checkpoint";
pub const CHECKPOINT_VERSION: &str = "v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: String,
    pub spec: MlpSpec,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
    pub tensors: Vec<TensorRecord>,
}

impl Checkpoint {
    pub fn from_mlp(net: &Mlp, metadata: BTreeMap<String, String>) -> Self {
        let tensors = net
            .params()
            .iter()
            .map(|t| TensorRecord {
                name: t.name.clone(),
                shape: t.shape(),
                values: t.values.iter().copied().collect(),
            })
            .collect();
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION.to_string(),
            spec: net.spec().clone(),
            metadata,
            tensors,
        }
    }

    pub fn into_mlp(self) -> Result<Mlp> {
        let mut params = ParamSet::new();
        for t in self.tensors {
            let [rows, cols] = t.shape[..] else {
                return Err(Error::Config(format!("tensor `{}` is not 2-D", t.name)));
            };
            let values = Array2::from_shape_vec((rows, cols), t.values)
                .map_err(|e| Error::Config(format!("tensor `{}`: {e}", t.name)))?;
            params.push(ParamTensor::new(t.name, values));
        }
        Mlp::from_params(self.spec, params)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str, origin: &Path) -> Result<Self> {
        #[derive(Deserialize)]
        struct Header {
            format: String,
            version: String,
        }
        let header: Header = serde_json::from_str(text)
            .map_err(|e| Error::parse(origin, e.line(), e.to_string()))?;
        if header.format != CHECKPOINT_FORMAT {
            return Err(Error::parse(origin, 1, format!("not a checkpoint: format `{}`", header.format)));
        }
        if header.version != CHECKPOINT_VERSION {
            return Err(Error::Version {
                found: header.version,
                expected: CHECKPOINT_VERSION.to_string(),
            });
        }
        serde_json::from_str(text).map_err(|e| Error::parse(origin, e.line(), e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn json_round_trip_is_bitwise() {
        let net = Mlp::init(MlpSpec::standard(7, 3), &mut rng::stream(1, "ckpt")).unwrap();
        let ck = Checkpoint::from_mlp(&net, BTreeMap::new());
        let back = Checkpoint::from_json(&ck.to_json(), Path::new("mem")).unwrap();
        let restored = back.into_mlp().unwrap();
        for (a, b) in net.params().iter().zip(restored.params().iter()) {
            let ab: Vec<u64> = a.values.iter().map(|v| v.to_bits()).collect();
            let bb: Vec<u64> = b.values.iter().map(|v| v.to_bits()).collect();
            assert_eq!(ab, bb);
        }
    }

    #[test]
    fn version_mismatch_is_explicit() {
        let net = Mlp::zeros(MlpSpec::standard(2, 2)).unwrap();
        let text = Checkpoint::from_mlp(&net, BTreeMap::new())
            .to_json()
            .replace("\"v1\"", "\"v0\"");
        assert!(matches!(
            Checkpoint::from_json(&text, Path::new("mem")),
            Err(Error::Version { .. })
        ));
    }

    #[test]
    fn shape_mismatch_rejected() {
        let net = Mlp::zeros(MlpSpec::standard(2, 2)).unwrap();
        let mut ck = Checkpoint::from_mlp(&net, BTreeMap::new());
        ck.spec.output_dim = 3;
        assert!(ck.into_mlp().is_err());
    }
}
