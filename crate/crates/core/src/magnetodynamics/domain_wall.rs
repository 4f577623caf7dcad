//! Behavioral domain-wall MTJ: wall displacement proportional to current×time,
//! conductance affine in wall position, and the saturated-linear neuron built
//! from the same device.

use serde::{Deserialize, Serialize};

use crate::error::{invalid_param, Error, Result};

/// Micromagnetic parameters of the CoFe/Pt strip the behavioral slope was
/// calibrated against. Informational only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Table2Metadata {
    pub ferromagnet_thickness: f64,
    pub grid_size: [f64; 3],
    pub heavy_metal_thickness: f64,
    pub domain_wall_width: f64,
    pub saturation_magnetization: f64,
    pub spin_hall_angle: f64,
    pub gilbert_damping: f64,
    pub exchange_constant: f64,
    pub perpendicular_anisotropy: f64,
    pub dmi_constant: f64,
}

impl Default for Table2Metadata {
    fn default() -> Self {
        Self {
            ferromagnet_thickness: 0.6e-9,
            grid_size: [4e-9, 1e-9, 0.6e-9],
            heavy_metal_thickness: 3e-9,
            domain_wall_width: 7.6e-9,
            saturation_magnetization: 700e3,
            spin_hall_angle: 0.07,
            gilbert_damping: 0.3,
            exchange_constant: 1e-11,
            perpendicular_anisotropy: 4.8e5,
            dmi_constant: -1.2e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DwDeviceParams {
    /// Free-layer length `L`, m.
    pub length: f64,
    /// Smallest programmable wall displacement, m.
    pub min_displacement_step: f64,
    /// `(R_AP - R_P)/R_P`.
    pub tmr: f64,
    /// Fully parallel conductance `G_P`, S.
    pub parallel_conductance: f64,
    /// Behavioral slope `k_dw`, m/(A·s).
    pub displacement_slope: f64,
    pub programming_pulse_duration: f64,
    pub table2: Table2Metadata,
}

impl Default for DwDeviceParams {
    /// Crossbar synapse: 320 nm long, 20 nm steps (16 levels), 300% TMR,
    /// `G_P = 10 µS`.
    fn default() -> Self {
        Self {
            length: 320e-9,
            min_displacement_step: 20e-9,
            tmr: 3.0,
            parallel_conductance: 10e-6,
            displacement_slope: 4e6,
            programming_pulse_duration: 10e-9,
            table2: Table2Metadata::default(),
        }
    }
}

impl DwDeviceParams {
    /// 160 nm neuron device (8 levels).
    pub fn neuron() -> Self {
        Self {
            length: 160e-9,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("length", self.length),
            ("min_displacement_step", self.min_displacement_step),
            ("parallel_conductance", self.parallel_conductance),
            ("displacement_slope", self.displacement_slope),
            ("programming_pulse_duration", self.programming_pulse_duration),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid_param(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.tmr >= 0.0) {
            return Err(invalid_param(format!("tmr must be non-negative, got {}", self.tmr)));
        }
        let ratio = self.length / self.min_displacement_step;
        if (ratio - ratio.round()).abs() > 1e-6 || ratio.round() < 1.0 {
            return Err(invalid_param(format!(
                "length / min_displacement_step must be a positive integer, got {ratio}"
            )));
        }
        Ok(())
    }

    /// Number of programmable levels, `L / min_displacement_step`.
    pub fn levels(&self) -> u32 {
        (self.length / self.min_displacement_step).round() as u32
    }

    /// Anti-parallel conductance `G_AP = G_P/(1+tmr)`, the lowest reachable value.
    pub fn g_min(&self) -> f64 {
        self.parallel_conductance / (1.0 + self.tmr)
    }

    pub fn g_max(&self) -> f64 {
        self.parallel_conductance
    }
}

/// Wall displacement for a programming current applied for `duration`,
/// starting from `position`. Saturates at both device edges.
pub fn dw_displace(device: &DwDeviceParams, position: f64, current: f64, duration: f64) -> f64 {
    let raw = device.displacement_slope * current * duration;
    raw.clamp(-position, device.length - position)
}

/// Conductance with the wall at `position` (0 = fully anti-parallel).
pub fn dw_conductance(device: &DwDeviceParams, position: f64) -> Result<f64> {
    if !(0.0..=device.length).contains(&position) {
        return Err(Error::InvalidArgument(format!(
            "wall position {position} outside [0, {}]",
            device.length
        )));
    }
    let g_ap = device.g_min();
    Ok(g_ap + (device.g_max() - g_ap) * (position / device.length))
}

/// A programmable device holding its wall position.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainWall {
    pub device: DwDeviceParams,
    pub position: f64,
}

impl DomainWall {
    pub fn new(device: DwDeviceParams) -> Self {
        Self {
            device,
            position: 0.0,
        }
    }

    pub fn reset(&mut self) {
        self.position = 0.0;
    }

    /// Applies a programming pulse and returns the displacement.
    pub fn program(&mut self, current: f64, duration: f64) -> f64 {
        let dx = dw_displace(&self.device, self.position, current, duration);
        self.position += dx;
        dx
    }

    pub fn conductance(&self) -> f64 {
        dw_conductance(&self.device, self.position.clamp(0.0, self.device.length))
            .expect("clamped position")
    }
}

/// Domain-wall neuron: saturated-linear in input current, read out in
/// `output_levels` uniform steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NeuronParams {
    pub device: DwDeviceParams,
    /// Current that drives the wall edge to edge in one programming pulse, A.
    pub critical_current: f64,
    pub output_levels: u32,
    /// Output units per unit normalized activation.
    pub transfer_gain: f64,
}

impl Default for NeuronParams {
    fn default() -> Self {
        Self {
            device: DwDeviceParams::neuron(),
            critical_current: 4e-6,
            output_levels: 8,
            transfer_gain: 1.0,
        }
    }
}

impl NeuronParams {
    /// Critical current implied by the device slope and pulse length.
    pub fn calibrated_critical_current(device: &DwDeviceParams) -> f64 {
        device.length / (device.displacement_slope * device.programming_pulse_duration)
    }
}

/// Normalized neuron output in `[0, 1]` for an input current, with the wall
/// reset to the anti-parallel edge before the evaluation.
pub fn neuron_transfer(input_current: f64, params: &NeuronParams) -> f64 {
    let y = (input_current / params.critical_current).clamp(0.0, 1.0);
    if params.output_levels < 2 {
        return y;
    }
    let steps = f64::from(params.output_levels - 1);
    (y * steps).round() / steps
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn displacement_calibration() {
        let neuron = DwDeviceParams::neuron();
        assert_eq!(dw_displace(&neuron, 0.0, 0.0, 10e-9), 0.0);
        let full = dw_displace(&neuron, 0.0, 4e-6, 10e-9);
        assert!((full - 160e-9).abs() < 1e-18);
        let half = dw_displace(&neuron, 0.0, 2e-6, 10e-9);
        assert!((half - 80e-9).abs() < 1e-18);
        // saturates at both edges
        assert!((dw_displace(&neuron, 0.0, 8e-6, 10e-9) - 160e-9).abs() < 1e-18);
        assert!((dw_displace(&neuron, 40e-9, -4e-6, 10e-9) + 40e-9).abs() < 1e-18);
        let ic = NeuronParams::calibrated_critical_current(&neuron);
        assert!((ic - 4e-6).abs() < 1e-18);
    }

    #[test]
    fn conductance_is_affine_in_position() {
        let d = DwDeviceParams::default();
        let g_p = d.parallel_conductance;
        assert!((dw_conductance(&d, d.length).unwrap() - g_p).abs() < 1e-18);
        assert!((dw_conductance(&d, 0.0).unwrap() - g_p / 4.0).abs() < 1e-18);
        assert!((dw_conductance(&d, d.length / 2.0).unwrap() - 0.625 * g_p).abs() < 1e-18);
        assert!(dw_conductance(&d, -1e-9).is_err());
        assert!(dw_conductance(&d, d.length * 1.01).is_err());
    }

    #[test]
    fn device_levels() {
        assert_eq!(DwDeviceParams::default().levels(), 16);
        assert_eq!(DwDeviceParams::neuron().levels(), 8);
        let bad = DwDeviceParams {
            min_displacement_step: 30e-9,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn programming_accumulates_and_saturates() {
        let mut w = DomainWall::new(DwDeviceParams::default());
        w.program(2e-6, 10e-9);
        assert!((w.position - 80e-9).abs() < 1e-18);
        w.program(100e-6, 10e-9);
        assert!((w.position - 320e-9).abs() < 1e-18);
        assert!((w.conductance() - 10e-6).abs() < 1e-18);
        w.reset();
        assert!((w.conductance() - 2.5e-6).abs() < 1e-18);
    }

    #[test]
    fn neuron_transfer_points() {
        let p = NeuronParams::default();
        assert_eq!(neuron_transfer(0.0, &p), 0.0);
        assert_eq!(neuron_transfer(4e-6, &p), 1.0);
        assert_eq!(neuron_transfer(8e-6, &p), 1.0);
        assert_eq!(neuron_transfer(-3e-6, &p), 0.0);
        // 2 µA → 0.5 → nearest of k/7 is 4/7
        assert!((neuron_transfer(2e-6, &p) - 4.0 / 7.0).abs() < 1e-15);
    }

    proptest::proptest! {
        #[test]
        fn neuron_is_monotone_and_bounded(a in -1e-5f64..1e-5, b in -1e-5f64..1e-5) {
            let p = NeuronParams::default();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let (ylo, yhi) = (neuron_transfer(lo, &p), neuron_transfer(hi, &p));
            proptest::prop_assert!(ylo <= yhi);
            proptest::prop_assert!((0.0..=1.0).contains(&ylo) && (0.0..=1.0).contains(&yhi));
        }

        #[test]
        fn conductance_stays_in_tmr_window(x in 0.0f64..=320e-9) {
            let d = DwDeviceParams::default();
            let g = dw_conductance(&d, x).unwrap();
            proptest::prop_assert!(g >= d.g_min() - 1e-18 && g <= d.g_max() + 1e-18);
        }
    }
}
