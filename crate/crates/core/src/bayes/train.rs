use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::elbo::elbo_loss;
use super::net::BayesNet;
use super::predict::evaluate;
use crate::dataset::Dataset;
use crate::error::{invalid_param, Error, Result};
use crate::rng::{derive_seed, stream_rng};

/// Optimizer and schedule settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    /// Weight draws per minibatch gradient.
    pub train_samples: usize,
    /// Networks averaged for the per-epoch accuracy.
    pub eval_samples: usize,
    /// Training items used for the per-epoch train accuracy; `None` uses all.
    pub train_eval_subset: Option<usize>,
    /// Training items used to set the activation scales at initialization.
    pub calibration_samples: usize,
    /// Fraction of initial pre-activations inside the linear region.
    pub activation_percentile: f64,
    /// Skip per-epoch accuracies except after the last epoch.
    pub final_eval_only: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 128,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-8,
            train_samples: 1,
            eval_samples: 10,
            train_eval_subset: Some(10_000),
            calibration_samples: 1000,
            activation_percentile: 0.95,
            final_eval_only: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.train_samples == 0 || self.eval_samples == 0 {
            return Err(invalid_param("batch size and sample counts must be positive"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(invalid_param("learning rate must be positive"));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return Err(invalid_param("Adam betas must be in [0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Mean minibatch objective over the epoch.
    pub mean_loss: f64,
    pub train_accuracy: Option<f64>,
    pub test_accuracy: Option<f64>,
    pub mean_sigma: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochMetrics>,
}

impl TrainLog {
    pub fn last(&self) -> Option<&EpochMetrics> {
        self.epochs.last()
    }
}

/// First and second moment estimates for one parameter tensor.
#[derive(Debug, Clone)]
pub struct Adam {
    m: Array2<f64>,
    v: Array2<f64>,
}

impl Adam {
    pub fn new(shape: (usize, usize)) -> Self {
        Self {
            m: Array2::zeros(shape),
            v: Array2::zeros(shape),
        }
    }

    /// Applies one step at 1-based iteration `t`.
    pub fn step(&mut self, param: &mut Array2<f64>, grad: &Array2<f64>, t: i32, cfg: &TrainConfig) {
        let (b1, b2) = (cfg.beta1, cfg.beta2);
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        let lr = cfg.learning_rate;
        let eps = cfg.adam_epsilon;
        ndarray::Zip::from(param)
            .and(&mut self.m)
            .and(&mut self.v)
            .and(grad)
            .for_each(|p, m, v, &g| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            });
    }
}

/// Initializes a network and calibrates its activation scales on the first
/// training items.
pub fn init_network(
    dims: &[usize],
    prior: super::PriorSpec,
    data: &Dataset,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<BayesNet> {
    let mut rng = stream_rng(derive_seed(seed, "init"), 0);
    let mut net = BayesNet::init(dims, prior, &mut rng)?;
    let n = cfg.calibration_samples.clamp(1, data.len().max(1));
    net.calibrate_scales(data.images.slice(ndarray::s![..n, ..]), cfg.activation_percentile)?;
    Ok(net)
}

/// Minibatch Adam on the variational objective. The complexity term of each
/// minibatch is weighted by `1/num_batches`.
pub fn train(
    net: &mut BayesNet,
    data: &Dataset,
    test: Option<&Dataset>,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainLog> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(invalid_param("training set is empty"));
    }
    let mut rng = stream_rng(derive_seed(seed, "train"), 0);
    let num_batches = data.len().div_ceil(cfg.batch_size);
    let kl_weight = 1.0 / num_batches as f64;
    let mut opt: Vec<(Adam, Adam)> = net
        .layers
        .iter()
        .map(|l| (Adam::new(l.mu.dim()), Adam::new(l.rho.dim())))
        .collect();
    let train_eval = match cfg.train_eval_subset {
        Some(n) if n < data.len() => data.stratified_subset(n, derive_seed(seed, "train-eval"))?,
        _ => data.clone(),
    };
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut log = TrainLog::default();
    let mut t = 0i32;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (batch, idx) in order.chunks(cfg.batch_size).enumerate() {
            let x = data.images.select(Axis(0), idx);
            let y: Vec<u8> = idx.iter().map(|&i| data.labels[i]).collect();
            let out = elbo_loss(net, x.view(), &y, cfg.train_samples, kl_weight, &mut rng)?;
            if !out.loss.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    batch,
                    loss: out.loss,
                });
            }
            loss_sum += out.loss;
            t += 1;
            for ((layer, (om, or)), (gm, gr)) in net
                .layers
                .iter_mut()
                .zip(opt.iter_mut())
                .zip(out.grad_mu.iter().zip(&out.grad_rho))
            {
                om.step(&mut layer.mu, gm, t, cfg);
                or.step(&mut layer.rho, gr, t, cfg);
            }
        }
        let evaluate_now = !cfg.final_eval_only || epoch + 1 == cfg.epochs;
        let eval_seed = derive_seed(seed, &format!("eval-{epoch}"));
        let (train_accuracy, test_accuracy) = if evaluate_now {
            (
                Some(evaluate(net, &train_eval, cfg.eval_samples, eval_seed)?),
                test.map(|d| evaluate(net, d, cfg.eval_samples, eval_seed ^ 1)).transpose()?,
            )
        } else {
            (None, None)
        };
        let mean_sigma = net.layers.iter().map(|l| l.mean_sigma() * l.mu.len() as f64).sum::<f64>()
            / net.layers.iter().map(|l| l.mu.len() as f64).sum::<f64>();
        log.epochs.push(EpochMetrics {
            epoch,
            mean_loss: loss_sum / num_batches as f64,
            train_accuracy,
            test_accuracy,
            mean_sigma,
        });
    }
    Ok(log)
}
