//! Domain-wall MTJ crossbar arrays as in-memory dot-product engines.
//!
//! Each input drives two lines; a positive weight is stored on the positive
//! line and a negative one on the negative line, with the unused line left at
//! the lowest conductance `g_min`. A column current is
//! `Σ_k V_k·(g_pos[k] − g_neg[k])`, so the common `g_min` offset cancels.
//!
//! Weight matrices use the `(inputs × outputs)` layout of the network layers:
//! row `k` is an input line pair, column `j` an output neuron.

use ndarray::{Array2, ArrayView1};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dims, invalid_param, Error, Result};
use crate::magnetodynamics::DwDeviceParams;
use crate::sampling::StandardSource;

/// Nearest of `levels` uniformly spaced codes on `[lo, hi]`; out-of-range
/// values clamp to the end codes, halves round away from zero.
pub fn quantize(value: f64, levels: u32, lo: f64, hi: f64) -> u32 {
    assert!(levels >= 2 && lo < hi, "quantize needs levels >= 2 and lo < hi");
    let t = (value.clamp(lo, hi) - lo) / (hi - lo) * f64::from(levels - 1);
    (t.round() as u32).min(levels - 1)
}

/// DAC and ADC settings.
///
/// `None` bit widths model ideal (unquantized) converters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConverterSpec {
    pub dac_bits: Option<u32>,
    pub adc_bits: Option<u32>,
    /// DAC output at full code, V.
    pub input_full_scale: f64,
    /// ADC input current at full code, A.
    pub output_full_scale: f64,
}

impl Default for ConverterSpec {
    fn default() -> Self {
        Self {
            dac_bits: Some(8),
            adc_bits: Some(8),
            input_full_scale: 0.1,
            output_full_scale: 4e-6,
        }
    }
}

impl ConverterSpec {
    pub fn ideal(input_full_scale: f64, output_full_scale: f64) -> Self {
        Self {
            dac_bits: None,
            adc_bits: None,
            input_full_scale,
            output_full_scale,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for b in [self.dac_bits, self.adc_bits].into_iter().flatten() {
            if !(1..=24).contains(&b) {
                return Err(invalid_param(format!("converter bits must be in 1..=24, got {b}")));
            }
        }
        if !(self.input_full_scale > 0.0 && self.output_full_scale > 0.0) {
            return Err(invalid_param("converter full scales must be positive"));
        }
        Ok(())
    }

    pub fn with_output_full_scale(&self, output_full_scale: f64) -> Self {
        Self {
            output_full_scale,
            ..self.clone()
        }
    }

    fn dac_max_code(&self) -> Option<f64> {
        self.dac_bits.map(|b| ((1u64 << b) - 1) as f64)
    }

    /// Voltage for an unsigned DAC code. Ideal converters read the code as a
    /// fraction of `2^24 - 1`.
    pub fn dac(&self, code: u32) -> f64 {
        let max = self.dac_max_code().unwrap_or(((1u64 << 24) - 1) as f64);
        f64::from(code).min(max) / max * self.input_full_scale
    }

    /// Unsigned ADC: clamps to `[0, full scale]`, rounds to the nearest code.
    pub fn adc(&self, current: f64) -> u32 {
        let bits = self.adc_bits.unwrap_or(24);
        let max = ((1u64 << bits) - 1) as f64;
        ((current / self.output_full_scale).clamp(0.0, 1.0) * max).round() as u32
    }

    /// Signed input drive: `x/x_full_scale` clamped to `[-1, 1]`, quantized to
    /// `dac_bits` of magnitude with the sign carried on the line polarity.
    #[inline]
    pub fn drive_voltage(&self, x: f64, x_full_scale: f64) -> f64 {
        self.driver(x_full_scale).voltage(x)
    }

    /// Precomputed [`Self::drive_voltage`] for a fixed activation full scale.
    pub fn driver(&self, x_full_scale: f64) -> Driver {
        Driver {
            inv_scale: 1.0 / x_full_scale,
            max_code: self.dac_max_code(),
            out: self.input_full_scale,
        }
    }

    /// Signed ADC code: `round(I/FS·(2^(b−1)−1))`, clamped.
    pub fn adc_signed(&self, current: f64) -> i32 {
        let bits = self.adc_bits.unwrap_or(24);
        let max = ((1u64 << (bits - 1)) - 1) as f64;
        ((current / self.output_full_scale).clamp(-1.0, 1.0) * max).round() as i32
    }

    /// Current reconstructed from the signed ADC reading; ideal converters pass
    /// the current through unclamped.
    #[inline]
    pub fn adc_signed_value(&self, current: f64) -> f64 {
        match self.adc_bits {
            Some(bits) => {
                let max = ((1u64 << (bits - 1)) - 1) as f64;
                f64::from(self.adc_signed(current)) / max * self.output_full_scale
            }
            None => current,
        }
    }

    /// One signed ADC step, A.
    pub fn adc_lsb(&self) -> f64 {
        let bits = self.adc_bits.unwrap_or(24);
        self.output_full_scale / ((1u64 << (bits - 1)) - 1) as f64
    }
}

/// Rounds half away from zero through an integer cast; `|v| < 2^52`.
#[inline]
fn round_half_away(v: f64) -> f64 {
    let r = (v.abs() + 0.5) as i64 as f64;
    if v < 0.0 {
        -r
    } else {
        r
    }
}

/// Signed DAC drive with constants hoisted out of inner loops.
#[derive(Debug, Clone, Copy)]
pub struct Driver {
    inv_scale: f64,
    max_code: Option<f64>,
    out: f64,
}

impl Driver {
    #[inline]
    pub fn voltage(&self, x: f64) -> f64 {
        let t = (x * self.inv_scale).clamp(-1.0, 1.0);
        let t = match self.max_code {
            Some(max) => round_half_away(t * max) / max,
            None => t,
        };
        t * self.out
    }
}

/// Programmed differential conductance pair for one crossbar.
#[derive(Debug, Clone, PartialEq)]
pub struct ConductanceMatrix {
    pub g_pos: Array2<f64>,
    pub g_neg: Array2<f64>,
    /// Quantization levels per line; `None` for continuous programming.
    pub levels: Option<u32>,
    pub g_min: f64,
    pub g_max: f64,
    /// Weight magnitude mapped to `g_max`.
    pub w_max: f64,
    pub supply_voltage: f64,
    /// Signed level codes as programmed (before any variation).
    pub codes: Option<Array2<i32>>,
    /// `(g_pos − g_neg)` transposed to `(outputs × inputs)` for column reads.
    diff_t: Array2<f64>,
}

impl ConductanceMatrix {
    pub fn from_conductances(
        g_pos: Array2<f64>,
        g_neg: Array2<f64>,
        levels: Option<u32>,
        g_min: f64,
        g_max: f64,
        w_max: f64,
        supply_voltage: f64,
        codes: Option<Array2<i32>>,
    ) -> Result<Self> {
        if g_pos.dim() != g_neg.dim() {
            return Err(Error::InvalidArgument(format!(
                "line shapes differ: {:?} vs {:?}",
                g_pos.dim(),
                g_neg.dim()
            )));
        }
        if !(g_min > 0.0 && g_max > g_min && w_max > 0.0 && supply_voltage > 0.0) {
            return Err(invalid_param("need 0 < g_min < g_max, w_max > 0, supply > 0"));
        }
        let diff_t = (&g_pos - &g_neg).reversed_axes().as_standard_layout().into_owned();
        Ok(Self {
            g_pos,
            g_neg,
            levels,
            g_min,
            g_max,
            w_max,
            supply_voltage,
            codes,
            diff_t,
        })
    }

    pub fn inputs(&self) -> usize {
        self.g_pos.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.g_pos.ncols()
    }

    /// Column current per unit of `(x/x_fs)·(w/w_max)` at full drive:
    /// `supply·(g_max − g_min)`.
    pub fn full_scale_cell_current(&self) -> f64 {
        self.supply_voltage * (self.g_max - self.g_min)
    }

    /// Conductance step between adjacent levels.
    pub fn level_step(&self) -> Option<f64> {
        self.levels.map(|l| (self.g_max - self.g_min) / f64::from(l - 1))
    }

    /// Differential conductances of column `j`, one per input.
    pub fn column_diff(&self, j: usize) -> ArrayView1<'_, f64> {
        self.diff_t.row(j)
    }

    /// Weights represented by the conductances.
    pub fn unmap(&self) -> Array2<f64> {
        (&self.g_pos - &self.g_neg) * (self.w_max / (self.g_max - self.g_min))
    }

    /// Sign exclusivity and conductance window.
    pub fn check_invariants(&self) -> Result<()> {
        let tol = 1e-12 * self.g_max;
        for (&p, &n) in self.g_pos.iter().zip(self.g_neg.iter()) {
            if p < self.g_min - tol || p > self.g_max + tol || n < self.g_min - tol || n > self.g_max + tol
            {
                return Err(Error::InvalidState(format!("conductance outside window: {p}, {n}")));
            }
        }
        if let (Some(codes), Some(step)) = (&self.codes, self.level_step()) {
            for ((&c, &p), &n) in codes.iter().zip(self.g_pos.iter()).zip(self.g_neg.iter()) {
                let (ep, en) = if c >= 0 {
                    (self.g_min + f64::from(c) * step, self.g_min)
                } else {
                    (self.g_min, self.g_min - f64::from(c) * step)
                };
                if (p - ep).abs() > tol || (n - en).abs() > tol {
                    // variation applied; codes describe the programming target only
                    return Ok(());
                }
                if p > self.g_min + tol && n > self.g_min + tol {
                    return Err(Error::InvalidState("both lines programmed".into()));
                }
            }
        }
        Ok(())
    }
}

/// Programs a weight matrix onto a differential conductance pair.
///
/// `|w|` is quantized onto `levels` codes over `[0, w_max]` (or mapped linearly
/// when `levels` is `None`); the sign picks the line.
pub fn map_weights_to_conductance(
    weights: &Array2<f64>,
    device: &DwDeviceParams,
    levels: Option<u32>,
    w_max: f64,
    supply_voltage: f64,
) -> Result<ConductanceMatrix> {
    device.validate()?;
    if !(w_max > 0.0) {
        return Err(invalid_param(format!("w_max must be positive, got {w_max}")));
    }
    if let Some(l) = levels {
        if l < 2 {
            return Err(invalid_param("need at least 2 levels"));
        }
    }
    let (g_min, g_max) = (device.g_min(), device.g_max());
    let span = g_max - g_min;
    let mut g_pos = Array2::from_elem(weights.dim(), g_min);
    let mut g_neg = Array2::from_elem(weights.dim(), g_min);
    let mut codes = levels.map(|_| Array2::<i32>::zeros(weights.dim()));
    for ((idx, &w), (p, n)) in weights
        .indexed_iter()
        .zip(g_pos.iter_mut().zip(g_neg.iter_mut()))
    {
        let (dg, code) = match levels {
            Some(l) => {
                let level = quantize(w.abs(), l, 0.0, w_max);
                (f64::from(level) * span / f64::from(l - 1), level as i32)
            }
            None => ((w.abs() / w_max).min(1.0) * span, 0),
        };
        if w > 0.0 {
            *p += dg;
        } else if w < 0.0 {
            *n += dg;
        }
        if let Some(c) = codes.as_mut() {
            c[idx] = if w < 0.0 { -code } else { code };
        }
    }
    ConductanceMatrix::from_conductances(g_pos, g_neg, levels, g_min, g_max, w_max, supply_voltage, codes)
}

/// Column current `Σ_k V_k·(g_pos[k] − g_neg[k])`.
pub fn column_read(voltages: &[f64], g_pos_col: &[f64], g_neg_col: &[f64]) -> Result<f64> {
    check_dims(voltages.len(), g_pos_col.len())?;
    check_dims(voltages.len(), g_neg_col.len())?;
    Ok(voltages
        .iter()
        .zip(g_pos_col.iter().zip(g_neg_col))
        .map(|(v, (p, n))| v * (p - n))
        .sum())
}

/// Input voltages for activations `x` (full scale 1) on the mean crossbar.
pub fn drive_voltages(x: &[f64], conv: &ConverterSpec) -> Vec<f64> {
    let d = conv.driver(1.0);
    x.iter().map(|&v| d.voltage(v)).collect()
}

/// Analog column currents of the mean crossbar for activations `x ∈ [0, 1]`.
pub fn layer_forward_mean(
    x: &[f64],
    g_mu: &ConductanceMatrix,
    conv: &ConverterSpec,
) -> Result<Vec<f64>> {
    check_dims(g_mu.inputs(), x.len())?;
    let v = ndarray::Array1::from(drive_voltages(x, conv));
    Ok(g_mu.diff_t.dot(&v).to_vec())
}

/// Operation counts and dissipated power of crossbar reads.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReadMeter {
    pub column_reads: u64,
    /// Input drives; the mean crossbar counts one per input per column.
    pub dac_conversions: u64,
    pub adc_conversions: u64,
    pub standard_samples: u64,
    /// Digital `x·z` products on the standard-deviation path.
    pub multiplies: u64,
    pub neuron_resets: u64,
    /// `Σ V²·(g_pos + g_neg)` summed over every column read, W.
    pub joule_power: f64,
}

impl ReadMeter {
    pub fn merge(&mut self, other: &ReadMeter) {
        self.column_reads += other.column_reads;
        self.dac_conversions += other.dac_conversions;
        self.adc_conversions += other.adc_conversions;
        self.standard_samples += other.standard_samples;
        self.multiplies += other.multiplies;
        self.neuron_resets += other.neuron_resets;
        self.joule_power += other.joule_power;
    }
}

/// [`layer_forward_mean`] that records every column read in `meter`.
pub fn layer_forward_mean_metered(
    x: &[f64],
    g_mu: &ConductanceMatrix,
    conv: &ConverterSpec,
    meter: &mut ReadMeter,
) -> Result<Vec<f64>> {
    let out = layer_forward_mean(x, g_mu, conv)?;
    let v = drive_voltages(x, conv);
    let cols = g_mu.outputs() as u64;
    meter.column_reads += cols;
    meter.dac_conversions += cols * x.len() as u64;
    for (k, vk) in v.iter().enumerate() {
        let g_row: f64 = g_mu.g_pos.row(k).sum() + g_mu.g_neg.row(k).sum();
        meter.joule_power += vk * vk * g_row;
    }
    Ok(out)
}

/// [`layer_forward_sigma`] that records every sample, product and read in `meter`.
pub fn layer_forward_sigma_metered<S: StandardSource + ?Sized>(
    x: &[f64],
    g_sigma: &ConductanceMatrix,
    conv: &ConverterSpec,
    z_full_scale: f64,
    sampler: &mut S,
    meter: &mut ReadMeter,
) -> Result<Vec<f64>> {
    sigma_pass(x, g_sigma, conv, z_full_scale, sampler, None, Some(meter))
}

/// Analog column currents of the standard-deviation crossbar.
///
/// Columns are read one after another; before each read a fresh vector of
/// standardized samples `z` (one per input) is drawn and the inputs are driven
/// with `x_k·z_k` scaled by `z_full_scale`. No sample is reused across columns.
pub fn layer_forward_sigma<S: StandardSource + ?Sized>(
    x: &[f64],
    g_sigma: &ConductanceMatrix,
    conv: &ConverterSpec,
    z_full_scale: f64,
    sampler: &mut S,
) -> Result<Vec<f64>> {
    sigma_pass(x, g_sigma, conv, z_full_scale, sampler, None, None)
}

/// [`layer_forward_sigma`] that also returns the `z` vector used for each column.
pub fn layer_forward_sigma_traced<S: StandardSource + ?Sized>(
    x: &[f64],
    g_sigma: &ConductanceMatrix,
    conv: &ConverterSpec,
    z_full_scale: f64,
    sampler: &mut S,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let mut trace = Vec::with_capacity(g_sigma.outputs());
    let out = sigma_pass(x, g_sigma, conv, z_full_scale, sampler, Some(&mut trace), None)?;
    Ok((out, trace))
}

fn sigma_pass<S: StandardSource + ?Sized>(
    x: &[f64],
    g_sigma: &ConductanceMatrix,
    conv: &ConverterSpec,
    z_full_scale: f64,
    sampler: &mut S,
    mut trace: Option<&mut Vec<Vec<f64>>>,
    mut meter: Option<&mut ReadMeter>,
) -> Result<Vec<f64>> {
    check_dims(g_sigma.inputs(), x.len())?;
    let mut out = Vec::with_capacity(g_sigma.outputs());
    let driver = conv.driver(z_full_scale);
    let mut z = vec![0.0; x.len()];
    for j in 0..g_sigma.outputs() {
        for zk in z.iter_mut() {
            *zk = sampler.next_standard()?;
        }
        let col = g_sigma.column_diff(j);
        let col = col.as_slice().expect("row of a standard-layout matrix");
        let mut current = 0.0;
        for ((&xk, &zk), &g) in x.iter().zip(&z).zip(col) {
            // an idle row adds no current but still consumed its sample
            if xk != 0.0 {
                current += driver.voltage(xk * zk) * g;
            }
        }
        if let Some(m) = meter.as_deref_mut() {
            let n = x.len() as u64;
            m.column_reads += 1;
            m.dac_conversions += n;
            m.standard_samples += n;
            m.multiplies += n;
            for (k, (&xk, &zk)) in x.iter().zip(&z).enumerate() {
                let v = driver.voltage(xk * zk);
                m.joule_power += v * v * (g_sigma.g_pos[[k, j]] + g_sigma.g_neg[[k, j]]);
            }
        }
        out.push(current);
        if let Some(t) = trace.as_deref_mut() {
            t.push(z.clone());
        }
    }
    Ok(out)
}

/// Multiplies every stored conductance by `1 + ε`, `ε ~ N(0, sigma_frac)`, and
/// clamps to the device window. Level codes are kept as the programming target.
pub fn apply_variation<R: Rng + ?Sized>(
    g: &ConductanceMatrix,
    sigma_frac: f64,
    rng: &mut R,
) -> Result<ConductanceMatrix> {
    if !(sigma_frac >= 0.0) {
        return Err(invalid_param(format!("variation must be non-negative, got {sigma_frac}")));
    }
    if sigma_frac == 0.0 {
        return Ok(g.clone());
    }
    let mut perturb = |v: f64| {
        let e: f64 = rng.sample(StandardNormal);
        (v * (1.0 + sigma_frac * e)).clamp(g.g_min, g.g_max)
    };
    let g_pos = g.g_pos.mapv(&mut perturb);
    let g_neg = g.g_neg.mapv(&mut perturb);
    ConductanceMatrix::from_conductances(
        g_pos,
        g_neg,
        g.levels,
        g.g_min,
        g.g_max,
        g.w_max,
        g.supply_voltage,
        g.codes.clone(),
    )
}

/// Flat JSON artifact for a programmed crossbar. Matrices are row-major
/// `(inputs × outputs)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConductanceArtifact {
    pub rows: usize,
    pub cols: usize,
    pub levels: Option<u32>,
    pub g_min: f64,
    pub g_max: f64,
    pub w_max: f64,
    pub supply_voltage: f64,
    /// Signed level codes, present for quantized crossbars.
    pub codes: Option<Vec<i32>>,
    /// Explicit conductances, written when they differ from the codes
    /// (continuous programming or applied variation).
    pub g_pos: Option<Vec<f64>>,
    pub g_neg: Option<Vec<f64>>,
}

impl ConductanceArtifact {
    pub fn from_matrix(g: &ConductanceMatrix) -> Self {
        let rebuilt = g.codes.as_ref().and_then(|_| Self::codes_only(g).into_matrix().ok());
        let codes_suffice = rebuilt.is_some_and(|r| r.g_pos == g.g_pos && r.g_neg == g.g_neg);
        let (g_pos, g_neg) = if codes_suffice {
            (None, None)
        } else {
            (
                Some(g.g_pos.iter().copied().collect()),
                Some(g.g_neg.iter().copied().collect()),
            )
        };
        Self {
            g_pos,
            g_neg,
            ..Self::codes_only(g)
        }
    }

    fn codes_only(g: &ConductanceMatrix) -> Self {
        Self {
            rows: g.inputs(),
            cols: g.outputs(),
            levels: g.levels,
            g_min: g.g_min,
            g_max: g.g_max,
            w_max: g.w_max,
            supply_voltage: g.supply_voltage,
            codes: g.codes.as_ref().map(|c| c.iter().copied().collect()),
            g_pos: None,
            g_neg: None,
        }
    }

    pub fn into_matrix(self) -> Result<ConductanceMatrix> {
        let shape = (self.rows, self.cols);
        let n = self.rows * self.cols;
        let to_array = |v: Vec<f64>| {
            check_dims(n, v.len())?;
            Array2::from_shape_vec(shape, v).map_err(|e| Error::Format(e.to_string()))
        };
        let codes = match self.codes {
            Some(c) => {
                check_dims(n, c.len())?;
                Some(Array2::from_shape_vec(shape, c).map_err(|e| Error::Format(e.to_string()))?)
            }
            None => None,
        };
        let (g_pos, g_neg) = match (self.g_pos, self.g_neg) {
            (Some(p), Some(q)) => (to_array(p)?, to_array(q)?),
            _ => {
                let (codes, levels) = match (&codes, self.levels) {
                    (Some(c), Some(l)) if l >= 2 => (c, l),
                    _ => {
                        return Err(Error::Format(
                            "artifact has neither conductances nor level codes".into(),
                        ))
                    }
                };
                let step = (self.g_max - self.g_min) / f64::from(levels - 1);
                let pos = codes.mapv(|c| self.g_min + f64::from(c.max(0)) * step);
                let neg = codes.mapv(|c| self.g_min + f64::from((-c).max(0)) * step);
                (pos, neg)
            }
        };
        ConductanceMatrix::from_conductances(
            g_pos,
            g_neg,
            self.levels,
            self.g_min,
            self.g_max,
            self.w_max,
            self.supply_voltage,
            codes,
        )
    }
}
