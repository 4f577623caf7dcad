//! Uniform and approximately Gaussian random numbers from arrays of random bits.
//!
//! A row read of an `n`-bit TRNG array yields a discrete uniform code. Averaging
//! `N` independent row reads and standardizing gives an approximately normal
//! variate (central limit construction). The exact distribution of the
//! unstandardized sum is Irwin-Hall, which serves as the test oracle here.

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{invalid_param, Error, Result};
use crate::magnetodynamics::{MacrospinState, TrngCell};
use crate::rng::{stream_rng, EntropySource};

/// Producer of fair random bits.
pub trait BitSource {
    fn next_bit(&mut self) -> Result<bool>;

    /// `n ≤ 64` bits packed little-end first.
    fn next_bits(&mut self, n: u32) -> Result<u64> {
        let mut v = 0u64;
        for i in 0..n {
            if self.next_bit()? {
                v |= 1 << i;
            }
        }
        Ok(v)
    }

    /// Sum of `rows` reads of `n` bits each.
    fn code_sum(&mut self, n: u32, rows: u32) -> Result<u64> {
        let mut acc = 0;
        for _ in 0..rows {
            acc += self.next_bits(n)?;
        }
        Ok(acc)
    }
}

/// Ideal Bernoulli(0.5) surrogate backed by a PRNG.
#[derive(Debug, Clone)]
pub struct IdealBits<R> {
    rng: R,
    buf: u64,
    avail: u32,
}

impl<R: RngCore> IdealBits<R> {
    pub fn new(rng: R) -> Self {
        Self {
            rng,
            buf: 0,
            avail: 0,
        }
    }
}

impl<R: RngCore> IdealBits<R> {
    #[inline]
    fn take(&mut self, n: u32) -> u64 {
        debug_assert!(n <= 64);
        if n == 0 {
            return 0;
        }
        if self.avail < n {
            // drop leftovers; keeps every draw aligned to a fresh word when it
            // would straddle one
            self.buf = self.rng.next_u64();
            self.avail = 64;
        }
        let v = if n == 64 { self.buf } else { self.buf & ((1u64 << n) - 1) };
        self.buf = if n == 64 { 0 } else { self.buf >> n };
        self.avail -= n;
        v
    }
}

impl<R: RngCore> IdealBits<R> {
    /// [`BitSource::code_sum`] with the row shape known at compile time.
    #[inline(always)]
    fn sum_rows<const N: u32, const ROWS: u32>(&mut self) -> u64 {
        let mask = (1u64 << N) - 1;
        let mut acc = 0;
        for _ in 0..ROWS {
            if self.avail < N {
                self.buf = self.rng.next_u64();
                self.avail = 64;
            }
            acc += self.buf & mask;
            self.buf >>= N;
            self.avail -= N;
        }
        acc
    }
}

impl<R: RngCore> BitSource for IdealBits<R> {
    fn next_bit(&mut self) -> Result<bool> {
        Ok(self.take(1) == 1)
    }

    #[inline]
    fn next_bits(&mut self, n: u32) -> Result<u64> {
        Ok(self.take(n))
    }

    #[inline]
    fn code_sum(&mut self, n: u32, rows: u32) -> Result<u64> {
        Ok(match (n, rows) {
            (8, 3) => self.sum_rows::<8, 3>(),
            (8, 1) => self.sum_rows::<8, 1>(),
            _ => {
                let mut acc = 0;
                for _ in 0..rows {
                    acc += self.take(n);
                }
                acc
            }
        })
    }
}

/// Bits from the simulated reset-relax MTJ cell. Each bit starts from the
/// state the previous one left behind.
#[derive(Debug, Clone)]
pub struct LlgBits<R> {
    cell: TrngCell,
    state: MacrospinState,
    rng: R,
}

impl<R: Rng> LlgBits<R> {
    pub fn new(cell: TrngCell, rng: R) -> Self {
        Self {
            cell,
            state: MacrospinState::up(),
            rng,
        }
    }
}

impl<R: Rng> BitSource for LlgBits<R> {
    fn next_bit(&mut self) -> Result<bool> {
        let out = self.cell.generate(self.state, &mut self.rng)?;
        self.state = out.final_state;
        Ok(out.bit)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BitSourceKind {
    /// Ideal Bernoulli(0.5) surrogate.
    Ideal,
    /// Full stochastic-LLG device simulation.
    Llg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaussianSamplerConfig {
    /// Bits per row read, `n`.
    pub bit_width: u32,
    /// Rows averaged per Gaussian sample, `N`.
    pub rows_averaged: u32,
    pub bit_source: BitSourceKind,
}

impl Default for GaussianSamplerConfig {
    fn default() -> Self {
        Self {
            bit_width: 8,
            rows_averaged: 3,
            bit_source: BitSourceKind::Ideal,
        }
    }
}

impl GaussianSamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=32).contains(&self.bit_width) {
            return Err(invalid_param(format!("bit_width must be in 1..=32, got {}", self.bit_width)));
        }
        if self.rows_averaged == 0 {
            return Err(invalid_param("rows_averaged must be at least 1"));
        }
        Ok(())
    }

    /// Largest |z| the sampler can emit: `sqrt(3N)`.
    pub fn z_bound(&self) -> f64 {
        (3.0 * f64::from(self.rows_averaged)).sqrt()
    }

    pub fn bits_per_sample(&self) -> u64 {
        u64::from(self.bit_width) * u64::from(self.rows_averaged)
    }

    pub fn adds_per_sample(&self) -> u64 {
        u64::from(self.rows_averaged) - 1
    }
}

/// Reads one `n`-bit row: `n` independent bits as an integer in `[0, 2^n)`.
pub fn sample_uniform_row<S: BitSource + ?Sized>(
    config: &GaussianSamplerConfig,
    source: &mut S,
) -> Result<u64> {
    source.next_bits(config.bit_width)
}

/// Midpoint fixed-point reading of an `n`-bit code: `(code + 0.5)/2^n`.
pub fn uniform_to_unit(code: u64, n: u32) -> Result<f64> {
    if n == 0 || n > 63 || code >= (1u64 << n) {
        return Err(Error::InvalidArgument(format!("code {code} out of range for {n} bits")));
    }
    Ok((code as f64 + 0.5) / (1u64 << n) as f64)
}

/// One standardized central-limit sample `z = (avg − 1/2)·sqrt(12N)`.
pub fn clt_gaussian_sample<S: BitSource + ?Sized>(
    config: &GaussianSamplerConfig,
    source: &mut S,
) -> Result<f64> {
    let n = config.bit_width;
    let mut acc = 0u64;
    for _ in 0..config.rows_averaged {
        acc += sample_uniform_row(config, source)?;
    }
    Ok(standardize_code_sum(acc, n, config.rows_averaged))
}

/// Affine map from a row-code sum to `z`: `z = code_sum·gain + offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Standardizer {
    gain: f64,
    offset: f64,
}

impl Standardizer {
    fn new(bit_width: u32, rows: u32) -> Self {
        let rows_f = f64::from(rows);
        let scale = (1u64 << bit_width) as f64;
        let root = (12.0 * rows_f).sqrt();
        let gain = root / (scale * rows_f);
        Self {
            gain,
            offset: (0.5 * rows_f / (scale * rows_f) - 0.5) * root,
        }
    }

    #[inline]
    fn apply(&self, code_sum: u64) -> f64 {
        code_sum as f64 * self.gain + self.offset
    }
}

#[inline]
fn standardize_code_sum(code_sum: u64, bit_width: u32, rows: u32) -> f64 {
    Standardizer::new(bit_width, rows).apply(code_sum)
}

/// Source of standard-normal (or standardized approximately normal) variates.
pub trait StandardSource {
    fn next_standard(&mut self) -> Result<f64>;
}

/// Central-limit sampler with usage counters for energy accounting.
#[derive(Debug, Clone)]
pub struct GaussianSampler<S> {
    config: GaussianSamplerConfig,
    source: S,
    samples: u64,
    standardizer: Standardizer,
}

impl<S: BitSource> GaussianSampler<S> {
    pub fn new(config: GaussianSamplerConfig, source: S) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            standardizer: Standardizer::new(config.bit_width, config.rows_averaged),
            config,
            source,
            samples: 0,
        })
    }

    pub fn config(&self) -> &GaussianSamplerConfig {
        &self.config
    }

    pub fn samples_drawn(&self) -> u64 {
        self.samples
    }

    pub fn bits_used(&self) -> u64 {
        self.samples * self.config.bits_per_sample()
    }

    pub fn adds(&self) -> u64 {
        self.samples * self.config.adds_per_sample()
    }

    #[inline]
    pub fn sample(&mut self) -> Result<f64> {
        self.samples += 1;
        let acc = self
            .source
            .code_sum(self.config.bit_width, self.config.rows_averaged)?;
        Ok(self.standardizer.apply(acc))
    }

    pub fn source_mut(&mut self) -> &mut S {
        &mut self.source
    }
}

impl<S: BitSource> StandardSource for GaussianSampler<S> {
    #[inline]
    fn next_standard(&mut self) -> Result<f64> {
        self.sample()
    }
}

/// Exact standard normal draws, for comparisons against the bit-built sampler.
#[derive(Debug, Clone)]
pub struct IdealNormal<R>(pub R);

impl<R: Rng> StandardSource for IdealNormal<R> {
    fn next_standard(&mut self) -> Result<f64> {
        Ok(self.0.sample(StandardNormal))
    }
}

/// Sampler over either bit source, as selected by configuration.
pub enum ConfiguredSampler {
    Ideal(GaussianSampler<IdealBits<EntropySource>>),
    Llg(GaussianSampler<LlgBits<EntropySource>>),
}

impl ConfiguredSampler {
    pub fn new(config: &GaussianSamplerConfig, cell: &TrngCell, rng: EntropySource) -> Result<Self> {
        Ok(match config.bit_source {
            BitSourceKind::Ideal => {
                Self::Ideal(GaussianSampler::new(config.clone(), IdealBits::new(rng))?)
            }
            BitSourceKind::Llg => {
                Self::Llg(GaussianSampler::new(config.clone(), LlgBits::new(cell.clone(), rng))?)
            }
        })
    }

    pub fn samples_drawn(&self) -> u64 {
        match self {
            Self::Ideal(s) => s.samples_drawn(),
            Self::Llg(s) => s.samples_drawn(),
        }
    }

    /// One row read, bypassing the accumulator.
    pub fn row(&mut self) -> Result<u64> {
        match self {
            Self::Ideal(s) => sample_uniform_row(&s.config, &mut s.source),
            Self::Llg(s) => sample_uniform_row(&s.config, &mut s.source),
        }
    }
}

impl StandardSource for ConfiguredSampler {
    #[inline]
    fn next_standard(&mut self) -> Result<f64> {
        match self {
            Self::Ideal(s) => s.sample(),
            Self::Llg(s) => s.sample(),
        }
    }
}

/// CDF of the sum of `n` independent U(0,1) variables.
pub fn irwin_hall_cdf(n: u32, x: f64) -> f64 {
    assert!(n >= 1, "Irwin-Hall order must be at least 1");
    let nf = f64::from(n);
    if x <= 0.0 {
        return 0.0;
    }
    if x >= nf {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut binom = 1.0;
    let top = x.floor() as u32;
    for k in 0..=top {
        if k > 0 {
            binom *= f64::from(n - k + 1) / f64::from(k);
        }
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        sum += sign * binom * (x - f64::from(k)).powi(n as i32);
    }
    let factorial: f64 = (1..=n).map(f64::from).product();
    (sum / factorial).clamp(0.0, 1.0)
}

/// Kolmogorov-Smirnov distance between the empirical CDF of `samples` and `cdf`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("empty sample batch".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        // ties: the ECDF jumps once past the whole run
        let x = sorted[i];
        let mut j = i;
        while j < sorted.len() && sorted[j] == x {
            j += 1;
        }
        let f = cdf(x);
        d = d.max((j as f64 / n - f).abs()).max((f - i as f64 / n).abs());
        i = j;
    }
    Ok(d)
}

/// Asymptotic KS critical value at 1% significance.
pub fn ks_critical_value_1pct(count: usize) -> f64 {
    1.63 / (count as f64).sqrt()
}

pub fn standard_normal_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
}

pub fn moments(values: &[f64]) -> Moments {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &v in values {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    Moments {
        mean,
        variance: m2,
        skewness: m3 / m2.powf(1.5),
        excess_kurtosis: m4 / (m2 * m2) - 3.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: u32,
    pub p_value: f64,
}

/// Chi-square goodness of fit of `n`-bit codes to the uniform distribution over
/// `bins` equal-width bins.
pub fn chi_square_uniformity(codes: &[u64], bit_width: u32, bins: u32) -> Result<ChiSquare> {
    let range = 1u64 << bit_width;
    if bins < 2 || range % u64::from(bins) != 0 {
        return Err(Error::InvalidArgument(format!(
            "{bins} bins do not evenly divide 2^{bit_width}"
        )));
    }
    if codes.is_empty() {
        return Err(Error::InvalidArgument("no codes".into()));
    }
    let width = range / u64::from(bins);
    let mut counts = vec![0u64; bins as usize];
    for &c in codes {
        if c >= range {
            return Err(Error::InvalidArgument(format!("code {c} exceeds {bit_width} bits")));
        }
        counts[(c / width) as usize] += 1;
    }
    let expected = codes.len() as f64 / f64::from(bins);
    let statistic: f64 = counts
        .iter()
        .map(|&o| (o as f64 - expected).powi(2) / expected)
        .sum();
    let dof = bins - 1;
    let dist = ChiSquared::new(f64::from(dof)).map_err(|e| Error::NumericalFailure(e.to_string()))?;
    Ok(ChiSquare {
        statistic,
        dof,
        p_value: 1.0 - dist.cdf(statistic),
    })
}

/// Standardized samples reproducible from `(seed, config)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleBatch {
    pub values: Vec<f64>,
    pub seed: u64,
    pub config: GaussianSamplerConfig,
}

impl SampleBatch {
    pub fn generate(
        config: &GaussianSamplerConfig,
        cell: &TrngCell,
        seed: u64,
        count: usize,
    ) -> Result<Self> {
        let mut sampler = ConfiguredSampler::new(config, cell, stream_rng(seed, 0))?;
        let values = (0..count)
            .map(|_| sampler.next_standard())
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            values,
            seed,
            config: config.clone(),
        })
    }

    /// Undo the standardization: the sum of the `N` unit-interval uniforms.
    pub fn sums(&self) -> Vec<f64> {
        let n = f64::from(self.config.rows_averaged);
        let scale = (12.0 * n).sqrt();
        self.values.iter().map(|z| n * (z / scale + 0.5)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub critical_value_1pct: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BitBalance {
    pub ones: u64,
    pub total: u64,
    pub fraction: f64,
}

/// Statistics battery emitted by `rng-test`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RngReport {
    pub config: GaussianSamplerConfig,
    pub seed: u64,
    pub count: usize,
    pub moments: Moments,
    pub ks_irwin_hall: KsResult,
    pub ks_normal: KsResult,
    /// Uniformity of the raw row codes over 16 bins (or `2^n` bins when smaller).
    pub chi_square: ChiSquare,
    pub bit_balance: BitBalance,
}

/// Runs the battery: `count` standardized samples plus `count` raw row reads.
pub fn rng_report(
    config: &GaussianSamplerConfig,
    cell: &TrngCell,
    seed: u64,
    count: usize,
) -> Result<RngReport> {
    config.validate()?;
    let batch = SampleBatch::generate(config, cell, seed, count)?;
    let m = moments(&batch.values);
    let crit = ks_critical_value_1pct(count);
    let n = config.rows_averaged;
    let d_ih = ks_statistic(&batch.sums(), |x| irwin_hall_cdf(n, x))?;
    let d_norm = ks_statistic(&batch.values, standard_normal_cdf)?;

    let mut rows = ConfiguredSampler::new(config, cell, stream_rng(seed, 1))?;
    let codes = (0..count).map(|_| rows.row()).collect::<Result<Vec<_>>>()?;
    let ones: u64 = codes.iter().map(|c| u64::from(c.count_ones())).sum();
    let total = count as u64 * u64::from(config.bit_width);
    let bins = 16.min(1u32 << config.bit_width.min(16));
    let chi = chi_square_uniformity(&codes, config.bit_width, bins)?;

    Ok(RngReport {
        config: config.clone(),
        seed,
        count,
        moments: m,
        ks_irwin_hall: KsResult {
            statistic: d_ih,
            critical_value_1pct: crit,
            pass: d_ih < crit,
        },
        ks_normal: KsResult {
            statistic: d_norm,
            critical_value_1pct: crit,
            pass: d_norm < crit,
        },
        chi_square: chi,
        bit_balance: BitBalance {
            ones,
            total,
            fraction: ones as f64 / total as f64,
        },
    })
}
