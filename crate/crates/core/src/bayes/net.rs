use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;

use super::layer::{PriorSpec, VariationalLayer};
use crate::error::{check_dims, invalid_param, Error, Result};

/// Saturated-linear activation `clamp(u/scale, 0, 1)`.
#[inline]
pub fn saturated_linear(u: f64, scale: f64) -> f64 {
    (u / scale).clamp(0.0, 1.0)
}

/// Rounds `y ∈ [0, 1]` onto `levels` uniform steps.
#[inline]
pub fn quantize_unit(y: f64, levels: u32) -> f64 {
    let top = f64::from(levels - 1);
    (y.clamp(0.0, 1.0) * top).round() / top
}

/// `q`-quantile (nearest rank) of the values.
pub(crate) fn quantile(values: impl IntoIterator<Item = f64>, q: f64) -> f64 {
    let mut v: Vec<f64> = values.into_iter().collect();
    if v.is_empty() {
        return 0.0;
    }
    let k = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1;
    let (_, x, _) = v.select_nth_unstable_by(k, f64::total_cmp);
    *x
}

/// Bayesian multilayer perceptron without biases.
///
/// Hidden layers apply [`saturated_linear`] with their own scale; the last
/// layer emits `u/scale` as class scores.
#[derive(Debug, Clone, PartialEq)]
pub struct BayesNet {
    pub layers: Vec<VariationalLayer>,
    /// One pre-activation scale per layer, the last one for the scores.
    pub activation_scales: Vec<f64>,
    pub prior: PriorSpec,
}

/// Pre-activations and activations of one forward pass; `activations[0]` is
/// the input.
pub(crate) struct Trace {
    pub pre: Vec<Array2<f64>>,
    pub activations: Vec<Array2<f64>>,
}

impl BayesNet {
    /// Random posterior with unit activation scales.
    pub fn init<R: Rng + ?Sized>(dims: &[usize], prior: PriorSpec, rng: &mut R) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(invalid_param(format!("need at least two positive layer sizes, got {dims:?}")));
        }
        prior.validate()?;
        let layers = dims
            .windows(2)
            .map(|d| VariationalLayer::init(d[0], d[1], rng))
            .collect();
        Ok(Self {
            layers,
            activation_scales: vec![1.0; dims.len() - 1],
            prior,
        })
    }

    pub fn from_layers(
        layers: Vec<VariationalLayer>,
        activation_scales: Vec<f64>,
        prior: PriorSpec,
    ) -> Result<Self> {
        prior.validate()?;
        if layers.is_empty() {
            return Err(invalid_param("network needs at least one layer"));
        }
        check_dims(layers.len(), activation_scales.len())?;
        for pair in layers.windows(2) {
            check_dims(pair[0].out_dim(), pair[1].in_dim())?;
        }
        if activation_scales.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(invalid_param("activation scales must be positive and finite"));
        }
        Ok(Self {
            layers,
            activation_scales,
            prior,
        })
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.layers[0].in_dim()];
        d.extend(self.layers.iter().map(|l| l.out_dim()));
        d
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| 2 * l.mu.len()).sum()
    }

    pub fn mean_weights(&self) -> Vec<Array2<f64>> {
        self.layers.iter().map(|l| l.mu.clone()).collect()
    }

    pub fn sample_weights<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Array2<f64>> {
        self.layers.iter().map(|l| l.sample_weights(rng)).collect()
    }

    /// Sets each scale to the `percentile` of `|u|` under the mean weights, so
    /// that fraction of pre-activations lands inside the linear region.
    pub fn calibrate_scales(&mut self, x: ArrayView2<'_, f64>, percentile: f64) -> Result<()> {
        if !(percentile > 0.0 && percentile <= 1.0) {
            return Err(invalid_param(format!("percentile must be in (0, 1], got {percentile}")));
        }
        check_dims(self.layers[0].in_dim(), x.ncols())?;
        let mut h = x.to_owned();
        for i in 0..self.layers.len() {
            let u = h.dot(&self.layers[i].mu);
            let s = quantile(u.iter().map(|v| v.abs()), percentile);
            self.activation_scales[i] = if s > 0.0 { s } else { 1.0 };
            h = u.mapv(|v| saturated_linear(v, self.activation_scales[i]));
        }
        Ok(())
    }

    fn check_weights(&self, x_cols: usize, weights: &[Array2<f64>]) -> Result<()> {
        check_dims(self.layers.len(), weights.len())?;
        check_dims(self.layers[0].in_dim(), x_cols)?;
        for (l, w) in self.layers.iter().zip(weights) {
            if l.mu.dim() != w.dim() {
                return Err(Error::InvalidArgument(format!(
                    "weight shape {:?} does not match layer {:?}",
                    w.dim(),
                    l.mu.dim()
                )));
            }
        }
        Ok(())
    }

    /// Class scores for a batch of row inputs under the given weights.
    pub fn forward(&self, x: ArrayView2<'_, f64>, weights: &[Array2<f64>]) -> Result<Array2<f64>> {
        self.forward_quantized(x, weights, None)
    }

    /// [`Self::forward`] with hidden activations rounded to `levels` steps.
    pub fn forward_quantized(
        &self,
        x: ArrayView2<'_, f64>,
        weights: &[Array2<f64>],
        levels: Option<u32>,
    ) -> Result<Array2<f64>> {
        self.check_weights(x.ncols(), weights)?;
        if levels.is_some_and(|l| l < 2) {
            return Err(invalid_param("activation quantization needs at least 2 levels"));
        }
        let last = weights.len() - 1;
        let mut h = x.to_owned();
        for (i, w) in weights.iter().enumerate() {
            let s = self.activation_scales[i];
            let mut u = h.dot(w);
            if i == last {
                u.mapv_inplace(|v| v / s);
                return Ok(u);
            }
            u.mapv_inplace(|v| {
                let y = saturated_linear(v, s);
                levels.map_or(y, |l| quantize_unit(y, l))
            });
            h = u;
        }
        unreachable!("at least one layer")
    }

    pub(crate) fn forward_trace(&self, x: ArrayView2<'_, f64>, weights: &[Array2<f64>]) -> Result<Trace> {
        self.check_weights(x.ncols(), weights)?;
        let last = weights.len() - 1;
        let mut pre = Vec::with_capacity(weights.len());
        let mut activations = vec![x.to_owned()];
        for (i, w) in weights.iter().enumerate() {
            let s = self.activation_scales[i];
            let u = activations[i].dot(w);
            let h = if i == last {
                u.mapv(|v| v / s)
            } else {
                u.mapv(|v| saturated_linear(v, s))
            };
            pre.push(u);
            activations.push(h);
        }
        Ok(Trace { pre, activations })
    }
}

/// Row-wise softmax.
pub fn softmax_rows(scores: &Array2<f64>) -> Array2<f64> {
    let mut p = scores.clone();
    for mut row in p.axis_iter_mut(Axis(0)) {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let z = row.sum();
        row.mapv_inplace(|v| v / z);
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use ndarray::array;

    fn net(dims: &[usize]) -> BayesNet {
        BayesNet::init(dims, PriorSpec::default(), &mut stream_rng(0, 0)).unwrap()
    }

    #[test]
    fn zero_weights_give_uniform_softmax() {
        let n = net(&[4, 3, 5]);
        let w = vec![Array2::zeros((4, 3)), Array2::zeros((3, 5))];
        let trace = n.forward_trace(array![[0.2, 0.4, 0.6, 0.8]].view(), &w).unwrap();
        assert!(trace.activations[1].iter().all(|&h| h == 0.0));
        let p = softmax_rows(&trace.activations[2]);
        assert!(p.iter().all(|&v| (v - 0.2).abs() < 1e-15));
    }

    #[test]
    fn single_linear_layer_is_proportional() {
        let mut n = net(&[3, 3]);
        n.activation_scales = vec![2.0];
        let eye = Array2::eye(3);
        let s = n.forward(array![[0.1, 0.2, 0.3]].view(), &[eye]).unwrap();
        assert_eq!(s, array![[0.05, 0.1, 0.15]]);
    }

    #[test]
    fn quantized_hidden_within_one_step() {
        let n = net(&[6, 5, 2]);
        let x = Array2::from_shape_fn((8, 6), |(i, j)| ((i * 5 + j * 3) % 11) as f64 / 10.0);
        let w = n.mean_weights();
        let t = n.forward_trace(x.view(), &w).unwrap();
        let h_exact = &t.activations[1];
        let h_q = h_exact.mapv(|v| quantize_unit(v, 8));
        assert!((h_exact - &h_q).iter().all(|d| d.abs() <= 0.5 / 7.0 + 1e-15));
        // the output of the quantized pass is the exact head applied to h_q
        let direct = h_q.dot(&w[1]).mapv(|v| v / n.activation_scales[1]);
        let via = n.forward_quantized(x.view(), &w, Some(8)).unwrap();
        assert!((direct - via).iter().all(|d| d.abs() < 1e-12));
    }

    #[test]
    fn calibration_hits_percentile() {
        let mut n = net(&[20, 10, 3]);
        let x = Array2::from_shape_fn((200, 20), |(i, j)| ((i * 7 + j * 13) % 17) as f64 / 16.0);
        n.calibrate_scales(x.view(), 0.95).unwrap();
        let u = x.dot(&n.layers[0].mu);
        let inside = u.iter().filter(|v| v.abs() <= n.activation_scales[0]).count();
        assert!((inside as f64 / u.len() as f64 - 0.95).abs() < 0.01);
    }

    #[test]
    fn shape_errors() {
        let n = net(&[4, 3, 2]);
        let w = n.mean_weights();
        assert!(matches!(
            n.forward(Array2::zeros((1, 5)).view(), &w),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(BayesNet::init(&[4], PriorSpec::default(), &mut stream_rng(0, 0)).is_err());
    }

    proptest::proptest! {
        #[test]
        fn activation_bounded_and_monotone(a in -1e6f64..1e6, b in -1e6f64..1e6, s in 1e-3f64..1e3) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let (ylo, yhi) = (saturated_linear(lo, s), saturated_linear(hi, s));
            proptest::prop_assert!((0.0..=1.0).contains(&ylo) && (0.0..=1.0).contains(&yhi));
            proptest::prop_assert!(ylo <= yhi);
        }
    }
}
