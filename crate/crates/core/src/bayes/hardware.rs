use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::net::{quantile, quantize_unit, saturated_linear, softmax_rows, BayesNet};
use super::predict::{accuracy, PredictiveOutput};
use crate::crossbar::{
    apply_variation, layer_forward_mean, ConductanceArtifact, layer_forward_mean_metered, layer_forward_sigma,
    layer_forward_sigma_metered, map_weights_to_conductance, ConductanceMatrix, ConverterSpec,
    ReadMeter,
};
use crate::dataset::Dataset;
use crate::error::{check_dims, invalid_param, Error, Result};
use crate::magnetodynamics::{neuron_transfer, DwDeviceParams, NeuronParams, TrngCell};
use crate::rng::stream_rng;
use crate::sampling::{ConfiguredSampler, GaussianSamplerConfig, StandardSource};

/// Mapping, converter and calibration settings for hardware inference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HardwareConfig {
    /// Conductance levels per line; `None` programs weights continuously.
    pub weight_levels: Option<u32>,
    pub device: DwDeviceParams,
    /// Hidden neurons; `output_levels < 2` disables output quantization.
    pub neuron: NeuronParams,
    pub converters: ConverterSpec,
    pub sampler: GaussianSamplerConfig,
    pub trng: TrngCell,
    /// Quantile of `|μ|` (and of `σ`) mapped to the top conductance level.
    pub weight_percentile: f64,
    /// Hidden mean-path ADC range in units of the activation scale.
    pub hidden_adc_range: f64,
    /// Output mean-path ADC range over the largest calibration magnitude.
    pub output_adc_headroom: f64,
    /// Deviation-path ADC range in units of the largest calibration std.
    pub sigma_adc_range: f64,
    /// Training items used to set ADC ranges.
    pub calibration_inputs: usize,
}

impl Default for HardwareConfig {
    fn default() -> Self {
        Self {
            weight_levels: Some(16),
            device: DwDeviceParams::default(),
            neuron: NeuronParams::default(),
            converters: ConverterSpec::default(),
            sampler: GaussianSamplerConfig::default(),
            trng: TrngCell::default(),
            weight_percentile: 0.999,
            hidden_adc_range: 2.0,
            output_adc_headroom: 1.25,
            sigma_adc_range: 4.0,
            calibration_inputs: 1000,
        }
    }
}

impl HardwareConfig {
    /// Continuous weights, unquantized neurons and ideal converters.
    pub fn ideal() -> Self {
        let base = Self::default();
        Self {
            weight_levels: None,
            neuron: NeuronParams {
                output_levels: 0,
                ..base.neuron.clone()
            },
            converters: ConverterSpec::ideal(
                base.converters.input_full_scale,
                base.converters.output_full_scale,
            ),
            weight_percentile: 1.0,
            ..base
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.device.validate()?;
        self.converters.validate()?;
        self.sampler.validate()?;
        if !(self.weight_percentile > 0.0 && self.weight_percentile <= 1.0) {
            return Err(invalid_param("weight percentile must be in (0, 1]"));
        }
        for (name, v) in [
            ("hidden_adc_range", self.hidden_adc_range),
            ("output_adc_headroom", self.output_adc_headroom),
            ("sigma_adc_range", self.sigma_adc_range),
            ("neuron critical current", self.neuron.critical_current),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid_param(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Mean and deviation crossbars of one layer with their readout ranges.
#[derive(Debug, Clone, PartialEq)]
pub struct ProgrammedLayer {
    pub mu: ConductanceMatrix,
    pub sigma: ConductanceMatrix,
    /// Pre-activation scale: the neuron's critical current for hidden layers,
    /// the score divisor for the output layer.
    pub activation_scale: f64,
    /// ADC ranges in pre-activation units.
    pub mu_full_scale: f64,
    pub sigma_full_scale: f64,
    pub hidden: bool,
}

impl ProgrammedLayer {
    /// Column current per pre-activation unit on the mean crossbar.
    pub fn mu_gain(&self) -> f64 {
        self.mu.full_scale_cell_current() / self.mu.w_max
    }

    /// Column current per pre-activation unit on the deviation crossbar.
    pub fn sigma_gain(&self, z_full_scale: f64) -> f64 {
        self.sigma.full_scale_cell_current() / (self.sigma.w_max * z_full_scale)
    }
}

/// A network programmed onto crossbars.
#[derive(Debug, Clone, PartialEq)]
pub struct HardwareNet {
    pub layers: Vec<ProgrammedLayer>,
    pub config: HardwareConfig,
}

fn positive_or(v: f64, fallback: f64) -> f64 {
    if v > 0.0 && v.is_finite() {
        v
    } else {
        fallback
    }
}

impl HardwareNet {
    /// Maps `μ` and `σ` of every layer and sets ADC ranges from `calibration`
    /// inputs propagated through the mean network with hardware neurons.
    pub fn program(
        net: &BayesNet,
        config: &HardwareConfig,
        calibration: ArrayView2<'_, f64>,
    ) -> Result<Self> {
        config.validate()?;
        check_dims(net.layers[0].in_dim(), calibration.ncols())?;
        if calibration.nrows() == 0 {
            return Err(invalid_param("calibration needs at least one input"));
        }
        let supply = config.converters.input_full_scale;
        let last = net.layers.len() - 1;
        let mut h = calibration.to_owned();
        let mut layers = Vec::with_capacity(net.layers.len());
        for (i, layer) in net.layers.iter().enumerate() {
            let sigma = layer.sigma();
            let s = net.activation_scales[i];
            let w_mu = positive_or(quantile(layer.mu.iter().map(|w| w.abs()), config.weight_percentile), 1.0);
            let w_sigma = positive_or(quantile(sigma.iter().copied(), config.weight_percentile), 1.0);
            let g_mu = map_weights_to_conductance(&layer.mu, &config.device, config.weight_levels, w_mu, supply)?;
            let g_sigma =
                map_weights_to_conductance(&sigma, &config.device, config.weight_levels, w_sigma, supply)?;

            let u = h.dot(&layer.mu);
            let std = h.mapv(|v| v * v).dot(&sigma.mapv(|v| v * v)).mapv(f64::sqrt);
            let max_std = std.iter().fold(0.0f64, |a, &b| a.max(b));
            let hidden = i < last;
            let mu_full_scale = if hidden {
                config.hidden_adc_range * s
            } else {
                positive_or(config.output_adc_headroom * u.iter().fold(0.0f64, |a, &b| a.max(b.abs())), s)
            };
            layers.push(ProgrammedLayer {
                mu: g_mu,
                sigma: g_sigma,
                activation_scale: s,
                mu_full_scale,
                sigma_full_scale: positive_or(config.sigma_adc_range * max_std, s),
                hidden,
            });
            let levels = config.neuron.output_levels;
            h = u.mapv(|v| {
                let y = saturated_linear(v, s);
                if levels >= 2 {
                    quantize_unit(y, levels)
                } else {
                    y
                }
            });
        }
        Ok(Self {
            layers,
            config: config.clone(),
        })
    }

    /// Independent programming-variation instance of both crossbars of every layer.
    pub fn with_variation<R: Rng + ?Sized>(&self, sigma_frac: f64, rng: &mut R) -> Result<Self> {
        let layers = self
            .layers
            .iter()
            .map(|l| {
                Ok(ProgrammedLayer {
                    mu: apply_variation(&l.mu, sigma_frac, rng)?,
                    sigma: apply_variation(&l.sigma, sigma_frac, rng)?,
                    ..l.clone()
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            layers,
            config: self.config.clone(),
        })
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d: Vec<usize> = self.layers.first().map(|l| vec![l.mu.inputs()]).unwrap_or_default();
        d.extend(self.layers.iter().map(|l| l.mu.outputs()));
        d
    }

    fn check_ready(&self, input_len: usize) -> Result<()> {
        let first = self
            .layers
            .first()
            .ok_or_else(|| Error::InvalidState("no crossbars programmed".into()))?;
        check_dims(first.mu.inputs(), input_len)
    }

    /// Sampler stream for input `index` of a run seeded with `seed`.
    pub fn sampler(&self, seed: u64, index: u64) -> Result<ConfiguredSampler> {
        ConfiguredSampler::new(&self.config.sampler, &self.config.trng, stream_rng(seed, index))
    }

    /// One stochastic network pass; returns class scores.
    pub fn forward_pass<S: StandardSource + ?Sized>(
        &self,
        x: &[f64],
        sampler: &mut S,
        mut meter: Option<&mut ReadMeter>,
    ) -> Result<Vec<f64>> {
        self.check_ready(x.len())?;
        let conv = &self.config.converters;
        let z_fs = self.config.sampler.z_bound();
        let neuron = &self.config.neuron;
        let mut h = x.to_vec();
        for layer in &self.layers {
            let (i_mu, i_sigma) = match meter.as_deref_mut() {
                Some(m) => (
                    layer_forward_mean_metered(&h, &layer.mu, conv, m)?,
                    layer_forward_sigma_metered(&h, &layer.sigma, conv, z_fs, sampler, m)?,
                ),
                None => (
                    layer_forward_mean(&h, &layer.mu, conv)?,
                    layer_forward_sigma(&h, &layer.sigma, conv, z_fs, sampler)?,
                ),
            };
            let (c_mu, c_sigma) = (layer.mu_gain(), layer.sigma_gain(z_fs));
            let adc_mu = conv.with_output_full_scale(c_mu * layer.mu_full_scale);
            let adc_sigma = conv.with_output_full_scale(c_sigma * layer.sigma_full_scale);
            let s = layer.activation_scale;
            h = i_mu
                .iter()
                .zip(&i_sigma)
                .map(|(&a, &b)| {
                    let u = adc_mu.adc_signed_value(a) / c_mu + adc_sigma.adc_signed_value(b) / c_sigma;
                    if layer.hidden {
                        neuron_transfer(u * neuron.critical_current / s, neuron)
                    } else {
                        u / s
                    }
                })
                .collect();
            if let Some(m) = meter.as_deref_mut() {
                let cols = layer.mu.outputs() as u64;
                m.adc_conversions += 2 * cols;
                if layer.hidden {
                    m.neuron_resets += cols;
                }
            }
        }
        Ok(h)
    }
}

pub const CONDUCTANCE_FORMAT: &str = "spinbayes-conductances/1";

/// Serialized crossbar pair of one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerExport {
    pub mu: ConductanceArtifact,
    pub sigma: ConductanceArtifact,
    pub activation_scale: f64,
    pub mu_full_scale: f64,
    pub sigma_full_scale: f64,
    pub hidden: bool,
}

/// JSON artifact with every programmed conductance of a network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardwareExport {
    pub format: String,
    pub dims: Vec<usize>,
    pub config: HardwareConfig,
    pub layers: Vec<LayerExport>,
}

impl HardwareNet {
    pub fn export(&self) -> HardwareExport {
        HardwareExport {
            format: CONDUCTANCE_FORMAT.to_string(),
            dims: self.dims(),
            config: self.config.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| LayerExport {
                    mu: ConductanceArtifact::from_matrix(&l.mu),
                    sigma: ConductanceArtifact::from_matrix(&l.sigma),
                    activation_scale: l.activation_scale,
                    mu_full_scale: l.mu_full_scale,
                    sigma_full_scale: l.sigma_full_scale,
                    hidden: l.hidden,
                })
                .collect(),
        }
    }

    pub fn from_export(e: HardwareExport) -> Result<Self> {
        if e.format != CONDUCTANCE_FORMAT {
            return Err(Error::Format(format!("unknown conductance format {:?}", e.format)));
        }
        e.config.validate()?;
        let layers = e
            .layers
            .into_iter()
            .map(|l| {
                Ok(ProgrammedLayer {
                    mu: l.mu.into_matrix()?,
                    sigma: l.sigma.into_matrix()?,
                    activation_scale: l.activation_scale,
                    mu_full_scale: l.mu_full_scale,
                    sigma_full_scale: l.sigma_full_scale,
                    hidden: l.hidden,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let hw = Self {
            layers,
            config: e.config,
        };
        check_dims(e.dims.len(), hw.dims().len())?;
        for (a, b) in e.dims.iter().zip(hw.dims()) {
            check_dims(*a, b)?;
        }
        Ok(hw)
    }
}

/// Averages the softmax of `samples` end-to-end stochastic passes.
pub fn hardware_predict<S: StandardSource + ?Sized>(
    hw: &HardwareNet,
    x: ArrayView1<'_, f64>,
    samples: usize,
    sampler: &mut S,
) -> Result<PredictiveOutput> {
    if samples == 0 {
        return Err(invalid_param("need at least one network sample"));
    }
    let x = x.to_vec();
    let mut scores = Vec::with_capacity(samples);
    for _ in 0..samples {
        scores.push(hw.forward_pass(&x, sampler, None)?);
    }
    let classes = scores[0].len();
    let rows = Array2::from_shape_vec((samples, classes), scores.concat())
        .map_err(|e| Error::NumericalFailure(e.to_string()))?;
    Ok(PredictiveOutput::from_probabilities(softmax_rows(&rows).view()))
}

/// Hardware predictions for every input, each on its own sampler stream.
pub fn hardware_predict_dataset(
    hw: &HardwareNet,
    data: &Dataset,
    samples: usize,
    seed: u64,
) -> Result<Vec<PredictiveOutput>> {
    (0..data.len())
        .into_par_iter()
        .map(|i| {
            let mut sampler = hw.sampler(seed, i as u64)?;
            hardware_predict(hw, data.images.row(i), samples, &mut sampler)
        })
        .collect()
}

pub fn hardware_evaluate(hw: &HardwareNet, data: &Dataset, samples: usize, seed: u64) -> Result<f64> {
    Ok(accuracy(&hardware_predict_dataset(hw, data, samples, seed)?, &data.labels))
}
