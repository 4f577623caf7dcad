use ndarray::Array2;
use rand::Rng;
use rand_distr::{StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{invalid_param, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Derivative of [`softplus`].
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn log_add_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Zero-mean two-component Gaussian scale mixture over each weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorSpec {
    /// Weight `π` of the wide component.
    pub mixture_weight: f64,
    pub sigma1: f64,
    pub sigma2: f64,
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self {
            mixture_weight: 0.5,
            sigma1: 1.0,
            sigma2: (-6.0f64).exp(),
        }
    }
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.mixture_weight > 0.0 && self.mixture_weight < 1.0) {
            return Err(invalid_param(format!(
                "mixture weight must be in (0, 1), got {}",
                self.mixture_weight
            )));
        }
        if !(self.sigma1 > 0.0 && self.sigma2 > 0.0) {
            return Err(invalid_param("prior component widths must be positive"));
        }
        Ok(())
    }

    #[inline]
    fn component_logs(&self, w: f64) -> (f64, f64) {
        let a = self.mixture_weight.ln() - LN_SQRT_2PI - self.sigma1.ln()
            - 0.5 * (w / self.sigma1).powi(2);
        let b = (1.0 - self.mixture_weight).ln() - LN_SQRT_2PI - self.sigma2.ln()
            - 0.5 * (w / self.sigma2).powi(2);
        (a, b)
    }

    /// `ln P(w)`.
    #[inline]
    pub fn log_prob(&self, w: f64) -> f64 {
        let (a, b) = self.component_logs(w);
        log_add_exp(a, b)
    }

    /// `d ln P(w) / dw`.
    #[inline]
    pub fn grad_log_prob(&self, w: f64) -> f64 {
        let (a, b) = self.component_logs(w);
        let r1 = 1.0 / (1.0 + (b - a).exp());
        let r2 = 1.0 - r1;
        -w * (r1 / (self.sigma1 * self.sigma1) + r2 / (self.sigma2 * self.sigma2))
    }
}

/// `ln N(w; μ, σ²)` written through the standardized residual `ε = (w − μ)/σ`.
#[inline]
pub fn log_gaussian_from_noise(sigma: f64, eps: f64) -> f64 {
    -LN_SQRT_2PI - sigma.ln() - 0.5 * eps * eps
}

/// Factorized Gaussian posterior over an `(inputs × outputs)` weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationalLayer {
    pub mu: Array2<f64>,
    /// `σ = softplus(ρ)`.
    pub rho: Array2<f64>,
}

impl VariationalLayer {
    pub fn new(mu: Array2<f64>, rho: Array2<f64>) -> Result<Self> {
        if mu.dim() != rho.dim() {
            return Err(invalid_param(format!(
                "mu {:?} and rho {:?} shapes differ",
                mu.dim(),
                rho.dim()
            )));
        }
        Ok(Self { mu, rho })
    }

    /// `μ ~ U(−0.2, 0.2)`, `ρ ~ U(−5, −4)`.
    pub fn init<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let mu_dist = Uniform::new(-0.2, 0.2).expect("valid range");
        let rho_dist = Uniform::new(-5.0, -4.0).expect("valid range");
        let mu = Array2::from_shape_simple_fn((in_dim, out_dim), || rng.sample(mu_dist));
        let rho = Array2::from_shape_simple_fn((in_dim, out_dim), || rng.sample(rho_dist));
        Self { mu, rho }
    }

    pub fn in_dim(&self) -> usize {
        self.mu.nrows()
    }

    pub fn out_dim(&self) -> usize {
        self.mu.ncols()
    }

    pub fn sigma(&self) -> Array2<f64> {
        self.rho.mapv(softplus)
    }

    pub fn sample_noise<R: Rng + ?Sized>(&self, rng: &mut R) -> Array2<f64> {
        Array2::from_shape_simple_fn(self.mu.dim(), || rng.sample(StandardNormal))
    }

    /// `W = μ + softplus(ρ)·ε`.
    pub fn weights_from_noise(&self, eps: &Array2<f64>) -> Array2<f64> {
        let mut w = self.mu.clone();
        ndarray::Zip::from(&mut w)
            .and(&self.rho)
            .and(eps)
            .for_each(|w, &r, &e| *w += softplus(r) * e);
        w
    }

    pub fn sample_weights<R: Rng + ?Sized>(&self, rng: &mut R) -> Array2<f64> {
        self.weights_from_noise(&self.sample_noise(rng))
    }

    pub fn mean_sigma(&self) -> f64 {
        self.rho.iter().map(|&r| softplus(r)).sum::<f64>() / self.rho.len().max(1) as f64
    }
}
