//! Per-inference energy ledger.
//!
//! Every entry is `count × unit energy`. Category totals sum their entry
//! subtotals in ledger order and the grand total is `rng + crossbar`.

use serde::{Deserialize, Serialize};

use crate::bayes::HardwareNet;
use crate::crossbar::ReadMeter;
use crate::error::{check_dims, invalid_param, Result};
use crate::sampling::{GaussianSamplerConfig, StandardSource};

/// Unit energies and timing. Peripheral unit energies are calibration inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyConstants {
    /// J per random bit.
    pub trng_bit_energy: f64,
    /// V.
    pub crossbar_supply_voltage: f64,
    /// s.
    pub column_read_time: f64,
    /// J per input drive.
    pub dac_energy_per_conversion: f64,
    /// J per column readout, neuron read included.
    pub adc_energy_per_conversion: f64,
    /// J per two-operand add in the sampler accumulator.
    pub accumulator_energy_per_add: f64,
    /// J per neuron reset.
    pub neuron_reset_energy: f64,
    /// J per `x·z` product feeding the deviation crossbar.
    pub multiplier_energy_per_op: f64,
    /// Reference CMOS energy per classification, J, used only for a ratio.
    pub cmos_reference_energy: f64,
}

impl Default for EnergyConstants {
    fn default() -> Self {
        Self {
            trng_bit_energy: 57e-15,
            crossbar_supply_voltage: 0.1,
            column_read_time: 10e-9,
            dac_energy_per_conversion: 0.5e-12,
            adc_energy_per_conversion: 2e-12,
            accumulator_energy_per_add: 0.44e-12,
            neuron_reset_energy: 0.1e-12,
            multiplier_energy_per_op: 0.7e-12,
            cmos_reference_energy: 24.0 * 790.2e-9,
        }
    }
}

impl EnergyConstants {
    pub fn zero() -> Self {
        Self {
            trng_bit_energy: 0.0,
            dac_energy_per_conversion: 0.0,
            adc_energy_per_conversion: 0.0,
            accumulator_energy_per_add: 0.0,
            neuron_reset_energy: 0.0,
            multiplier_energy_per_op: 0.0,
            cmos_reference_energy: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.trng_bit_energy,
            self.crossbar_supply_voltage,
            self.column_read_time,
            self.dac_energy_per_conversion,
            self.adc_energy_per_conversion,
            self.accumulator_energy_per_add,
            self.neuron_reset_energy,
            self.multiplier_energy_per_op,
            self.cmos_reference_energy,
        ];
        if all.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(invalid_param("energy constants must be finite and nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Rng,
    CrossbarAndPeripherals,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub label: String,
    pub category: Category,
    pub count: f64,
    pub unit_energy: f64,
    pub subtotal: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub entries: Vec<LedgerEntry>,
    pub rng_total: f64,
    pub crossbar_total: f64,
    pub grand_total: f64,
    /// Network passes covered by the ledger.
    pub passes: u64,
    /// Notes on counting conventions.
    pub notes: Vec<String>,
}

impl EnergyLedger {
    pub fn push(&mut self, label: &str, category: Category, count: f64, unit_energy: f64) {
        let subtotal = count * unit_energy;
        self.entries.push(LedgerEntry {
            label: label.to_string(),
            category,
            count,
            unit_energy,
            subtotal,
        });
        self.recompute();
    }

    fn recompute(&mut self) {
        let sum = |c: Category| {
            self.entries
                .iter()
                .filter(|e| e.category == c)
                .map(|e| e.subtotal)
                .sum::<f64>()
        };
        self.rng_total = sum(Category::Rng);
        self.crossbar_total = sum(Category::CrossbarAndPeripherals);
        self.grand_total = self.rng_total + self.crossbar_total;
    }

    pub fn entry(&self, label: &str) -> Option<&LedgerEntry> {
        self.entries.iter().find(|e| e.label == label)
    }

    /// Reference CMOS energy over this ledger's grand total, per pass.
    pub fn cmos_ratio(&self, constants: &EnergyConstants) -> Option<f64> {
        let per_pass = self.grand_total / self.passes.max(1) as f64;
        (per_pass > 0.0 && constants.cmos_reference_energy > 0.0)
            .then(|| constants.cmos_reference_energy / per_pass)
    }

    /// Fixed-width table of the entries and totals.
    pub fn to_table(&self) -> String {
        let mut s = format!("{:<34} {:>14} {:>12} {:>12}\n", "component", "count", "unit (fJ)", "total (nJ)");
        for e in &self.entries {
            s += &format!(
                "{:<34} {:>14.0} {:>12.3} {:>12.3}\n",
                e.label,
                e.count,
                e.unit_energy * 1e15,
                e.subtotal * 1e9
            );
        }
        s += &format!("{:<34} {:>40.3}\n", "rng total", self.rng_total * 1e9);
        s += &format!("{:<34} {:>40.3}\n", "crossbar and peripherals total", self.crossbar_total * 1e9);
        s += &format!("{:<34} {:>40.3}\n", "grand total", self.grand_total * 1e9);
        s
    }
}

/// `bits·E_bit + adds·E_add`.
pub fn rng_energy(random_bits: u64, adds: u64, constants: &EnergyConstants) -> f64 {
    random_bits as f64 * constants.trng_bit_energy + adds as f64 * constants.accumulator_energy_per_add
}

/// Energy of one column read: Joule heating over the read window, one DAC
/// conversion per driven input, one ADC conversion and one neuron reset.
pub fn crossbar_read_energy(
    g_pos_col: &[f64],
    g_neg_col: &[f64],
    input_voltages: &[f64],
    constants: &EnergyConstants,
) -> Result<f64> {
    check_dims(input_voltages.len(), g_pos_col.len())?;
    check_dims(input_voltages.len(), g_neg_col.len())?;
    let joule: f64 = input_voltages
        .iter()
        .zip(g_pos_col.iter().zip(g_neg_col))
        .map(|(v, (p, n))| v * v * (p + n))
        .sum::<f64>()
        * constants.column_read_time;
    Ok(joule
        + input_voltages.len() as f64 * constants.dac_energy_per_conversion
        + constants.adc_energy_per_conversion
        + constants.neuron_reset_energy)
}

/// Operation counts of the hardware schedule.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScheduleCounts {
    pub gaussian_samples: u64,
    pub random_bits: u64,
    pub accumulator_adds: u64,
    pub dac_conversions: u64,
    pub adc_conversions: u64,
    pub column_reads: u64,
    pub multiplies: u64,
    pub neuron_resets: u64,
    /// `Σ V²·(g_pos + g_neg)` over all reads, W.
    pub joule_power: f64,
}

impl ScheduleCounts {
    /// Counts for one pass over fully connected layers of the given sizes. Joule
    /// power is left at zero since it depends on inputs and conductances.
    pub fn for_dims(dims: &[usize], sampler: &GaussianSamplerConfig) -> Self {
        let weights: u64 = dims.windows(2).map(|d| (d[0] * d[1]) as u64).sum();
        let columns: u64 = dims[1..].iter().map(|&d| d as u64).sum();
        let hidden: u64 = dims[1..dims.len().saturating_sub(1)].iter().map(|&d| d as u64).sum();
        Self {
            gaussian_samples: weights,
            random_bits: weights * sampler.bits_per_sample(),
            accumulator_adds: weights * sampler.adds_per_sample(),
            dac_conversions: 2 * weights,
            adc_conversions: 2 * columns,
            column_reads: 2 * columns,
            multiplies: weights,
            neuron_resets: hidden,
            joule_power: 0.0,
        }
    }

    pub fn from_meter(meter: &ReadMeter, sampler: &GaussianSamplerConfig) -> Self {
        Self {
            gaussian_samples: meter.standard_samples,
            random_bits: meter.standard_samples * sampler.bits_per_sample(),
            accumulator_adds: meter.standard_samples * sampler.adds_per_sample(),
            dac_conversions: meter.dac_conversions,
            adc_conversions: meter.adc_conversions,
            column_reads: meter.column_reads,
            multiplies: meter.multiplies,
            neuron_resets: meter.neuron_resets,
            joule_power: meter.joule_power,
        }
    }
}

/// Itemized ledger for the given schedule counts.
pub fn ledger_from_counts(counts: &ScheduleCounts, constants: &EnergyConstants, passes: u64) -> Result<EnergyLedger> {
    constants.validate()?;
    let mut l = EnergyLedger {
        passes,
        notes: vec![
            "one ADC conversion per column read on each crossbar".into(),
            "mean-crossbar input drives counted once per column read".into(),
        ],
        ..Default::default()
    };
    use Category::*;
    l.push("random bits", Rng, counts.random_bits as f64, constants.trng_bit_energy);
    l.push("accumulator adds", Rng, counts.accumulator_adds as f64, constants.accumulator_energy_per_add);
    l.push(
        "crossbar joule (W·read window)",
        CrossbarAndPeripherals,
        counts.joule_power,
        constants.column_read_time,
    );
    l.push("dac conversions", CrossbarAndPeripherals, counts.dac_conversions as f64, constants.dac_energy_per_conversion);
    l.push("adc conversions", CrossbarAndPeripherals, counts.adc_conversions as f64, constants.adc_energy_per_conversion);
    l.push("x·z multiplies", CrossbarAndPeripherals, counts.multiplies as f64, constants.multiplier_energy_per_op);
    l.push("neuron resets", CrossbarAndPeripherals, counts.neuron_resets as f64, constants.neuron_reset_energy);
    Ok(l)
}

/// Walks `passes` metered hardware passes on input `x` and itemizes their energy.
pub fn inference_energy_report<S: StandardSource + ?Sized>(
    hw: &HardwareNet,
    x: &[f64],
    passes: u64,
    sampler: &mut S,
    constants: &EnergyConstants,
) -> Result<EnergyLedger> {
    if passes == 0 {
        return Err(invalid_param("need at least one pass"));
    }
    let supply = hw.config.converters.input_full_scale;
    if (supply - constants.crossbar_supply_voltage).abs() > 1e-12 * supply.max(1.0) {
        return Err(invalid_param(format!(
            "crossbar supply {supply} V differs from energy constants {} V",
            constants.crossbar_supply_voltage
        )));
    }
    let mut meter = ReadMeter::default();
    for _ in 0..passes {
        hw.forward_pass(x, sampler, Some(&mut meter))?;
    }
    ledger_from_counts(&ScheduleCounts::from_meter(&meter, &hw.config.sampler), constants, passes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rng_energy_cases() {
        let c = EnergyConstants::default();
        assert_eq!(rng_energy(0, 0, &c), 0.0);
        assert!((rng_energy(1, 0, &c) - 57e-15).abs() < 1e-30);
        let s = GaussianSamplerConfig::default();
        let one = rng_energy(s.bits_per_sample(), s.adds_per_sample(), &c);
        assert!((one - (24.0 * 57e-15 + 2.0 * c.accumulator_energy_per_add)).abs() < 1e-27);
    }

    #[test]
    fn column_read_cases() {
        let z = EnergyConstants::zero();
        let e = crossbar_read_energy(&[10e-6], &[0.0], &[0.1], &z).unwrap();
        assert!((e - 1e-15).abs() < 1e-28);
        let c = EnergyConstants::default();
        let quiet = crossbar_read_energy(&[5e-6; 3], &[5e-6; 3], &[0.0; 3], &c).unwrap();
        let conv = 3.0 * c.dac_energy_per_conversion + c.adc_energy_per_conversion + c.neuron_reset_energy;
        assert!((quiet - conv).abs() < 1e-27);
        let a = crossbar_read_energy(&[5e-6, 2e-6], &[2.5e-6, 9e-6], &[0.03, -0.08], &c).unwrap();
        let b = crossbar_read_energy(&[5e-6, 2e-6], &[2.5e-6, 9e-6], &[-0.03, 0.08], &c).unwrap();
        assert_eq!(a, b);
        assert!(crossbar_read_energy(&[1e-6], &[1e-6, 1e-6], &[0.1], &c).is_err());
    }

    #[test]
    fn reference_network_counts() {
        let k = ScheduleCounts::for_dims(&[784, 200, 200, 10], &GaussianSamplerConfig::default());
        assert_eq!(k.gaussian_samples, 784 * 200 + 200 * 200 + 200 * 10);
        assert_eq!(k.random_bits, 24 * 198_800);
        assert_eq!(k.accumulator_adds, 2 * 198_800);
        assert_eq!(k.column_reads, 820);
        assert_eq!(k.neuron_resets, 400);
    }

    #[test]
    fn isolated_rng_bits() {
        let k = ScheduleCounts::for_dims(&[1, 1, 1], &GaussianSamplerConfig::default());
        let c = EnergyConstants {
            trng_bit_energy: 57e-15,
            ..EnergyConstants::zero()
        };
        let l = ledger_from_counts(&k, &c, 1).unwrap();
        assert_eq!(l.grand_total, 2.0 * 24.0 * 57e-15);
        assert_eq!(l.grand_total, l.rng_total);
        let nonzero: Vec<_> = l.entries.iter().filter(|e| e.subtotal != 0.0).collect();
        assert_eq!(nonzero.len(), 1);
        assert_eq!(nonzero[0].count, 48.0);
    }

    #[test]
    fn negative_constants_rejected() {
        let c = EnergyConstants {
            adc_energy_per_conversion: -1.0,
            ..Default::default()
        };
        assert!(ledger_from_counts(&ScheduleCounts::default(), &c, 1).is_err());
    }

    proptest::proptest! {
        #[test]
        fn additivity_and_monotonicity(
            counts in proptest::collection::vec(0u64..10_000_000, 8),
            power in 0.0f64..1e-3,
            bump in 0usize..7,
        ) {
            let k = ScheduleCounts {
                gaussian_samples: counts[0],
                random_bits: counts[1],
                accumulator_adds: counts[2],
                dac_conversions: counts[3],
                adc_conversions: counts[4],
                column_reads: counts[5],
                multiplies: counts[6],
                neuron_resets: counts[7],
                joule_power: power,
            };
            let c = EnergyConstants::default();
            let l = ledger_from_counts(&k, &c, 1).unwrap();
            let (mut rng, mut xbar) = (0.0, 0.0);
            for e in &l.entries {
                proptest::prop_assert_eq!(e.subtotal, e.count * e.unit_energy);
                match e.category {
                    Category::Rng => rng += e.subtotal,
                    Category::CrossbarAndPeripherals => xbar += e.subtotal,
                }
            }
            proptest::prop_assert_eq!(l.rng_total, rng);
            proptest::prop_assert_eq!(l.crossbar_total, xbar);
            proptest::prop_assert_eq!(l.grand_total, rng + xbar);
            let mut more = c.clone();
            let fields = [
                &mut more.trng_bit_energy,
                &mut more.accumulator_energy_per_add,
                &mut more.column_read_time,
                &mut more.dac_energy_per_conversion,
                &mut more.adc_energy_per_conversion,
                &mut more.multiplier_energy_per_op,
                &mut more.neuron_reset_energy,
            ];
            *fields.into_iter().nth(bump).unwrap() *= 1.5;
            proptest::prop_assert!(ledger_from_counts(&k, &more, 1).unwrap().grand_total >= l.grand_total);
        }
    }
}
