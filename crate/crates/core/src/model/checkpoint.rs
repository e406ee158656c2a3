//! Model checkpoints as pretty-printed JSON:
//!
//! ```json
//! {
//!   "format": "focuslr-mlp",
//!   "version": 1,
//!   "seed": 7,
//!   "layer_dims": [32, 64, 100],
//!   "activation": "relu",
//!   "layers": [ { "weights": [...], "biases": [...] }, ... ],
//!   "standardizer": { "mean": [...], "std": [...] }
//! }
//! ```
//!
//! `layers[l].weights` is row-major `[layer_dims[l] x layer_dims[l + 1]]`
//! (input-major: entry `i * out + j` connects input `i` to output `j`).
//! Values are stored as `f64` in shortest round-trip form. `standardizer` is
//! the input normalisation fitted on the training split, or `null`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Standardizer;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::mlp::{Activation, Dense, Mlp};

pub const CHECKPOINT_FORMAT: &str = "focuslr-mlp";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerParams {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub layer_dims: Vec<usize>,
    pub activation: Activation,
    pub layers: Vec<LayerParams>,
    pub standardizer: Option<Standardizer>,
}

impl Checkpoint {
    pub fn from_model<T: Scalar>(
        model: &Mlp<T>,
        seed: u64,
        standardizer: Option<Standardizer>,
    ) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            seed,
            layer_dims: model.layer_dims(),
            activation: model.activation(),
            layers: model
                .layers()
                .iter()
                .map(|l| LayerParams {
                    weights: l.weights.iter().map(|v| v.as_f64()).collect(),
                    biases: l.biases.iter().map(|v| v.as_f64()).collect(),
                })
                .collect(),
            standardizer,
        }
    }

    pub fn to_model<T: Scalar>(&self) -> Result<Mlp<T>> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(Error::Schema(format!(
                "unsupported checkpoint {} v{}",
                self.format, self.version
            )));
        }
        if self.layer_dims.len() != self.layers.len() + 1 {
            return Err(Error::Schema(format!(
                "{} layer dims for {} layers",
                self.layer_dims.len(),
                self.layers.len()
            )));
        }
        let layers = self
            .layers
            .iter()
            .zip(self.layer_dims.windows(2))
            .map(|(p, w)| Dense {
                inputs: w[0],
                outputs: w[1],
                weights: p.weights.iter().map(|&v| T::lit(v)).collect(),
                biases: p.biases.iter().map(|&v| T::lit(v)).collect(),
            })
            .collect();
        let model = Mlp::from_layers(layers)?;
        if !model.is_finite() {
            return Err(Error::Schema(
                "checkpoint holds non-finite parameters".into(),
            ));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut out, self)?;
        writeln!(out)?;
        out.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
    }
}
