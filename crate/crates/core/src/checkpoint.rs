//! JSON checkpoints of trained networks.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{Layer, MlpParams};
use crate::stencil::StencilKind;

pub const FORMAT: &str = "cann-checkpoint";
pub const VERSION: u32 = 1;

/// Where a network came from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Metadata {
    pub problem: Option<String>,
    pub variant: Option<String>,
    pub stencil: Option<StencilKind>,
    pub dim: Option<usize>,
    pub counts: Option<Vec<usize>>,
    pub dx: Option<f64>,
    pub dt: Option<f64>,
    pub final_loss: Option<f64>,
    pub iterations: Option<usize>,
    pub config_hash: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LayerDoc {
    rows: usize,
    cols: usize,
    /// Row-major.
    weights: Vec<f64>,
    biases: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Document {
    format: String,
    version: u32,
    sizes: Vec<usize>,
    hidden_activation: String,
    output_activation: String,
    layers: Vec<LayerDoc>,
    seed: Option<u64>,
    metadata: Metadata,
}

/// A network together with its seed and training metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: MlpParams,
    pub seed: Option<u64>,
    pub metadata: Metadata,
}

impl Checkpoint {
    pub fn new(params: MlpParams, seed: Option<u64>, metadata: Metadata) -> Self {
        Self { params, seed, metadata }
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = Document {
            format: FORMAT.into(),
            version: VERSION,
            sizes: self.params.sizes().to_vec(),
            hidden_activation: "tanh".into(),
            output_activation: "identity".into(),
            layers: self
                .params
                .layers()
                .iter()
                .map(|l| LayerDoc {
                    rows: l.outputs(),
                    cols: l.inputs(),
                    weights: l.weights.iter().copied().collect(),
                    biases: l.biases.to_vec(),
                })
                .collect(),
            seed: self.seed,
            metadata: self.metadata.clone(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, String> {
        let doc: Document = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if doc.format != FORMAT {
            return Err(format!("format '{}' is not '{FORMAT}'", doc.format));
        }
        if doc.version != VERSION {
            return Err(format!("unsupported version {} (expected {VERSION})", doc.version));
        }
        if doc.hidden_activation != "tanh" || doc.output_activation != "identity" {
            return Err(format!(
                "activations '{}'/'{}' are not supported (expected tanh/identity)",
                doc.hidden_activation, doc.output_activation
            ));
        }
        if doc.layers.len() + 1 != doc.sizes.len() {
            return Err(format!("{} layers for sizes {:?}", doc.layers.len(), doc.sizes));
        }
        let mut layers = Vec::with_capacity(doc.layers.len());
        for (k, l) in doc.layers.into_iter().enumerate() {
            if l.rows != doc.sizes[k + 1] || l.cols != doc.sizes[k] {
                return Err(format!(
                    "layer {k} is {}x{} but sizes {:?} require {}x{}",
                    l.rows,
                    l.cols,
                    doc.sizes,
                    doc.sizes[k + 1],
                    doc.sizes[k]
                ));
            }
            if l.biases.len() != l.rows {
                return Err(format!("layer {k} has {} biases for {} outputs", l.biases.len(), l.rows));
            }
            let weights = Array2::from_shape_vec((l.rows, l.cols), l.weights)
                .map_err(|e| format!("layer {k} weights: {e}"))?;
            layers.push(Layer {
                weights,
                biases: Array1::from(l.biases),
            });
        }
        let params = MlpParams::from_layers(layers).map_err(|e| e.to_string())?;
        Ok(Self {
            params,
            seed: doc.seed,
            metadata: doc.metadata,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Checkpoint {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        Self::from_json(&text).map_err(|reason| Error::Checkpoint {
            path: path.to_path_buf(),
            reason,
        })
    }

    /// Plain-text parameter listing.
    pub fn dump(&self) -> String {
        let mut out = format!("sizes {:?}, tanh hidden, identity output\n", self.params.sizes());
        if let Some(seed) = self.seed {
            out += &format!("seed {seed}\n");
        }
        let m = &self.metadata;
        if let (Some(p), Some(v)) = (&m.problem, &m.variant) {
            out += &format!("trained on {p}/{v}\n");
        }
        if let Some(loss) = m.final_loss {
            out += &format!("final loss {loss:e}\n");
        }
        for (k, l) in self.params.layers().iter().enumerate() {
            out += &format!("layer {k}: weights {}x{}\n", l.outputs(), l.inputs());
            for row in l.weights.rows() {
                let cells: Vec<String> = row.iter().map(|w| format!("{w:+.8e}")).collect();
                out += &format!("  {}\n", cells.join(" "));
            }
            let b: Vec<String> = l.biases.iter().map(|w| format!("{w:+.8e}")).collect();
            out += &format!("  biases {}\n", b.join(" "));
        }
        out
    }
}
