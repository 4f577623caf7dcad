use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::layer::{PriorSpec, VariationalLayer};
use super::net::BayesNet;
use super::train::{TrainConfig, TrainLog};
use crate::error::{check_dims, Error, Result};

pub const CHECKPOINT_FORMAT: &str = "spinbayes-checkpoint/1";

/// One layer with row-major `(in_dim × out_dim)` parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub in_dim: usize,
    pub out_dim: usize,
    pub mu: Vec<f64>,
    pub rho: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub seed: u64,
    pub config: TrainConfig,
    pub log: TrainLog,
    pub train_items: usize,
}

/// Serialized posterior, JSON on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub dims: Vec<usize>,
    pub layers: Vec<LayerRecord>,
    pub activation_scales: Vec<f64>,
    pub prior: PriorSpec,
    pub training: Option<TrainingRecord>,
}

impl Checkpoint {
    pub fn from_net(net: &BayesNet, training: Option<TrainingRecord>) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            dims: net.dims(),
            layers: net
                .layers
                .iter()
                .map(|l| LayerRecord {
                    in_dim: l.in_dim(),
                    out_dim: l.out_dim(),
                    mu: l.mu.iter().copied().collect(),
                    rho: l.rho.iter().copied().collect(),
                })
                .collect(),
            activation_scales: net.activation_scales.clone(),
            prior: net.prior.clone(),
            training,
        }
    }

    pub fn to_net(&self) -> Result<BayesNet> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::Format(format!("unknown checkpoint format {:?}", self.format)));
        }
        check_dims(self.dims.len(), self.layers.len() + 1)?;
        let layers = self
            .layers
            .iter()
            .zip(self.dims.windows(2))
            .map(|(r, d)| {
                check_dims(d[0], r.in_dim)?;
                check_dims(d[1], r.out_dim)?;
                let shape = (r.in_dim, r.out_dim);
                let mu = Array2::from_shape_vec(shape, r.mu.clone())
                    .map_err(|e| Error::Format(format!("mu: {e}")))?;
                let rho = Array2::from_shape_vec(shape, r.rho.clone())
                    .map_err(|e| Error::Format(format!("rho: {e}")))?;
                VariationalLayer::new(mu, rho)
            })
            .collect::<Result<Vec<_>>>()?;
        BayesNet::from_layers(layers, self.activation_scales.clone(), self.prior.clone())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| {
            Error::InvalidState(format!("cannot read checkpoint {}: {e}", path.display()))
        })?;
        Ok(serde_json::from_slice(&bytes)?)
    }
}
