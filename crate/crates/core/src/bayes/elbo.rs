use ndarray::{Array2, ArrayView2, Axis, Zip};
use rand::Rng;

use super::layer::{log_gaussian_from_noise, sigmoid, softplus};
use super::net::BayesNet;
use crate::error::{check_dims, invalid_param, Error, Result};

/// Which parts of the objective to include.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ElboTerms {
    /// `ln q(W|θ)`.
    pub entropy: bool,
    /// `−ln P(W)`.
    pub prior: bool,
    /// `−ln P(batch|W)`.
    pub likelihood: bool,
}

impl ElboTerms {
    pub const ALL: Self = Self {
        entropy: true,
        prior: true,
        likelihood: true,
    };
}

/// Loss value, its parts, and gradients with respect to `μ` and `ρ`.
#[derive(Debug, Clone)]
pub struct ElboOutput {
    pub loss: f64,
    /// Summed categorical cross-entropy over the batch.
    pub nll: f64,
    pub log_q: f64,
    pub log_prior: f64,
    pub grad_mu: Vec<Array2<f64>>,
    pub grad_rho: Vec<Array2<f64>>,
}

/// Monte-Carlo estimate over `samples` weight draws of
/// `kl_weight·(ln q(W) − ln P(W)) − ln P(batch|W)`.
pub fn elbo_loss<R: Rng + ?Sized>(
    net: &BayesNet,
    x: ArrayView2<'_, f64>,
    labels: &[u8],
    samples: usize,
    kl_weight: f64,
    rng: &mut R,
) -> Result<ElboOutput> {
    if samples == 0 {
        return Err(invalid_param("need at least one training sample"));
    }
    let mut total: Option<ElboOutput> = None;
    for _ in 0..samples {
        let noise: Vec<_> = net.layers.iter().map(|l| l.sample_noise(rng)).collect();
        let out = elbo_loss_with_noise(net, x, labels, &noise, kl_weight, ElboTerms::ALL)?;
        total = Some(match total {
            None => out,
            Some(mut acc) => {
                acc.loss += out.loss;
                acc.nll += out.nll;
                acc.log_q += out.log_q;
                acc.log_prior += out.log_prior;
                for (a, b) in acc.grad_mu.iter_mut().zip(&out.grad_mu) {
                    *a += b;
                }
                for (a, b) in acc.grad_rho.iter_mut().zip(&out.grad_rho) {
                    *a += b;
                }
                acc
            }
        });
    }
    let mut acc = total.expect("samples >= 1");
    if samples > 1 {
        let k = 1.0 / samples as f64;
        acc.loss *= k;
        acc.nll *= k;
        acc.log_q *= k;
        acc.log_prior *= k;
        acc.grad_mu.iter_mut().chain(acc.grad_rho.iter_mut()).for_each(|g| *g *= k);
    }
    Ok(acc)
}

/// Single-draw objective with the standardized noise `ε` held fixed, so that
/// `W = μ + softplus(ρ)·ε` is a deterministic function of the parameters.
pub fn elbo_loss_with_noise(
    net: &BayesNet,
    x: ArrayView2<'_, f64>,
    labels: &[u8],
    noise: &[Array2<f64>],
    kl_weight: f64,
    terms: ElboTerms,
) -> Result<ElboOutput> {
    check_dims(x.nrows(), labels.len())?;
    check_dims(net.layers.len(), noise.len())?;
    let classes = net.layers.last().expect("nonempty").out_dim();
    if let Some(&bad) = labels.iter().find(|&&l| usize::from(l) >= classes) {
        return Err(Error::InvalidArgument(format!("label {bad} outside {classes} classes")));
    }
    let weights: Vec<_> = net
        .layers
        .iter()
        .zip(noise)
        .map(|(l, e)| {
            if l.mu.dim() != e.dim() {
                return Err(Error::InvalidArgument("noise shape does not match layer".into()));
            }
            Ok(l.weights_from_noise(e))
        })
        .collect::<Result<_>>()?;

    // complexity terms and the gradient of −kl·ln P(W) with respect to W
    let mut log_q = 0.0;
    let mut log_prior = 0.0;
    let mut grad_w: Vec<Array2<f64>> = Vec::with_capacity(weights.len());
    for (layer, (w, e)) in net.layers.iter().zip(weights.iter().zip(noise)) {
        let mut g = Array2::zeros(w.dim());
        Zip::from(&mut g).and(w).and(&layer.rho).and(e).for_each(|g, &w, &r, &e| {
            log_q += log_gaussian_from_noise(softplus(r), e);
            log_prior += net.prior.log_prob(w);
            if terms.prior {
                *g = -kl_weight * net.prior.grad_log_prob(w);
            }
        });
        grad_w.push(g);
    }

    let mut nll = 0.0;
    if terms.likelihood {
        let trace = net.forward_trace(x, &weights)?;
        let last = weights.len() - 1;
        let scores = &trace.activations[last + 1];
        // softmax cross-entropy and its score gradient
        let mut delta = scores.clone();
        for (mut row, &y) in delta.axis_iter_mut(Axis(0)).zip(labels) {
            let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            nll += lse - row[usize::from(y)];
            row.mapv_inplace(|v| (v - lse).exp());
            row[usize::from(y)] -= 1.0;
        }
        // back through u/scale, then the hidden clamps
        let mut du = delta / net.activation_scales[last];
        for i in (0..=last).rev() {
            grad_w[i] += &trace.activations[i].t().dot(&du);
            if i == 0 {
                break;
            }
            let s = net.activation_scales[i - 1];
            let mut dh = du.dot(&weights[i].t());
            Zip::from(&mut dh).and(&trace.pre[i - 1]).for_each(|d, &u| {
                let t = u / s;
                *d = if t > 0.0 && t < 1.0 { *d / s } else { 0.0 };
            });
            du = dh;
        }
    }

    let mut grad_mu = Vec::with_capacity(grad_w.len());
    let mut grad_rho = Vec::with_capacity(grad_w.len());
    for ((layer, gw), e) in net.layers.iter().zip(grad_w).zip(noise) {
        let mut gr = Array2::zeros(gw.dim());
        Zip::from(&mut gr).and(&gw).and(&layer.rho).and(e).for_each(|gr, &g, &r, &e| {
            let entropy = if terms.entropy { -kl_weight / softplus(r) } else { 0.0 };
            *gr = (g * e + entropy) * sigmoid(r);
        });
        grad_mu.push(gw);
        grad_rho.push(gr);
    }

    let mut loss = 0.0;
    if terms.entropy {
        loss += kl_weight * log_q;
    }
    if terms.prior {
        loss -= kl_weight * log_prior;
    }
    if terms.likelihood {
        loss += nll;
    }
    Ok(ElboOutput {
        loss,
        nll,
        log_q,
        log_prior,
        grad_mu,
        grad_rho,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bayes::layer::PriorSpec;
    use crate::rng::stream_rng;

    fn toy() -> (BayesNet, Array2<f64>, Vec<u8>, Vec<Array2<f64>>) {
        let mut rng = stream_rng(11, 0);
        let mut net = BayesNet::init(&[4, 3, 2], PriorSpec::default(), &mut rng).unwrap();
        for l in &mut net.layers {
            l.rho.mapv_inplace(|r| r + 3.0);
        }
        net.activation_scales = vec![0.5, 0.4];
        let x = Array2::from_shape_fn((5, 4), |(i, j)| ((i * 3 + j * 5) % 7) as f64 / 6.0);
        let labels = vec![0, 1, 1, 0, 1];
        let noise = net.layers.iter().map(|l| l.sample_noise(&mut rng)).collect();
        (net, x, labels, noise)
    }

    #[test]
    fn parts_add_up() {
        let (net, x, y, noise) = toy();
        let o = elbo_loss_with_noise(&net, x.view(), &y, &noise, 0.3, ElboTerms::ALL).unwrap();
        assert!((o.loss - (0.3 * (o.log_q - o.log_prior) + o.nll)).abs() < 1e-12);
        assert!(o.nll > 0.0);
    }

    #[test]
    fn sample_average_of_one_draw_is_that_draw() {
        let (net, x, y, _) = toy();
        let mut a = stream_rng(5, 0);
        let mut b = stream_rng(5, 0);
        let o = elbo_loss(&net, x.view(), &y, 1, 0.1, &mut a).unwrap();
        let noise: Vec<_> = net.layers.iter().map(|l| l.sample_noise(&mut b)).collect();
        let d = elbo_loss_with_noise(&net, x.view(), &y, &noise, 0.1, ElboTerms::ALL).unwrap();
        assert_eq!(o.loss, d.loss);
        assert!(elbo_loss(&net, x.view(), &y, 0, 0.1, &mut a).is_err());
    }

    #[test]
    fn rejects_bad_labels() {
        let (net, x, _, noise) = toy();
        let r = elbo_loss_with_noise(&net, x.view(), &[0, 1, 2, 0, 1], &noise, 1.0, ElboTerms::ALL);
        assert!(matches!(r, Err(Error::InvalidArgument(_))));
    }
}
