use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::net::{softmax_rows, BayesNet};
use crate::dataset::Dataset;
use crate::error::{invalid_param, Result};
use crate::rng::stream_rng;

/// Ensemble prediction for one input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveOutput {
    /// Class probabilities averaged over the sampled networks.
    pub class_scores: Vec<f64>,
    /// Per-class population variance of the probabilities across samples.
    pub score_variance: Vec<f64>,
    pub samples: usize,
    pub predicted: usize,
}

impl PredictiveOutput {
    /// Mean and variance over `samples` rows of per-sample probabilities.
    pub fn from_probabilities(rows: ArrayView2<'_, f64>) -> Self {
        let s = rows.nrows();
        let mean = rows.mean_axis(Axis(0)).expect("at least one sample");
        let var = rows.var_axis(Axis(0), 0.0);
        let predicted = argmax(mean.view());
        Self {
            class_scores: mean.to_vec(),
            score_variance: var.to_vec(),
            samples: s,
            predicted,
        }
    }
}

pub(crate) fn argmax(v: ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Predictions for a batch of rows; each of the `samples` weight draws is
/// applied to the whole batch.
pub fn predict_batch<R: Rng + ?Sized>(
    net: &BayesNet,
    x: ArrayView2<'_, f64>,
    samples: usize,
    rng: &mut R,
) -> Result<Vec<PredictiveOutput>> {
    if samples == 0 {
        return Err(invalid_param("need at least one posterior sample"));
    }
    let classes = net.layers.last().expect("nonempty").out_dim();
    let n = x.nrows();
    let mut sum = Array2::<f64>::zeros((n, classes));
    let mut sum_sq = Array2::<f64>::zeros((n, classes));
    for _ in 0..samples {
        let w = net.sample_weights(rng);
        let p = softmax_rows(&net.forward(x, &w)?);
        sum_sq += &p.mapv(|v| v * v);
        sum += &p;
    }
    let k = samples as f64;
    Ok((0..n)
        .map(|i| {
            let mean = sum.row(i).mapv(|v| v / k);
            let var: Vec<f64> = sum_sq
                .row(i)
                .iter()
                .zip(mean.iter())
                .map(|(&sq, &m)| (sq / k - m * m).max(0.0))
                .collect();
            PredictiveOutput {
                predicted: argmax(mean.view()),
                class_scores: mean.to_vec(),
                score_variance: var,
                samples,
            }
        })
        .collect())
}

/// Prediction for a single input.
pub fn predict<R: Rng + ?Sized>(
    net: &BayesNet,
    x: ArrayView1<'_, f64>,
    samples: usize,
    rng: &mut R,
) -> Result<PredictiveOutput> {
    let row = x.insert_axis(Axis(0));
    Ok(predict_batch(net, row, samples, rng)?.remove(0))
}

/// Fraction of outputs whose argmax matches the label.
pub fn accuracy(outputs: &[PredictiveOutput], labels: &[u8]) -> f64 {
    let hits = outputs
        .iter()
        .zip(labels)
        .filter(|(o, &l)| o.predicted == usize::from(l))
        .count();
    hits as f64 / labels.len().max(1) as f64
}

/// Ensemble accuracy on a dataset, evaluated in chunks.
pub fn evaluate(net: &BayesNet, data: &Dataset, samples: usize, seed: u64) -> Result<f64> {
    let mut rng = stream_rng(seed, 0);
    let outputs = predict_batch(net, data.images.view(), samples, &mut rng)?;
    Ok(accuracy(&outputs, &data.labels))
}
