use serde::{Deserialize, Serialize};

use crate::error::{invalid_param, Result};

/// Vacuum permeability (T·m/A).
pub const MU_0: f64 = 1.256_637_062_12e-6;
/// Bohr magneton (J/T).
pub const MU_B: f64 = 9.274_010_078_3e-24;
/// Reduced Planck constant (J·s).
pub const HBAR: f64 = 1.054_571_817e-34;
/// Boltzmann constant (J/K).
pub const K_B: f64 = 1.380_649e-23;
/// Elementary charge (C).
pub const Q_E: f64 = 1.602_176_634e-19;

/// Gyromagnetic ratio of the electron in the `H`-field (A/m) convention,
/// `2·μ_B·μ0/ħ`, in m/(A·s).
pub const GAMMA: f64 = 2.0 * MU_B * MU_0 / HBAR;

/// Mono-domain MTJ free layer driven by a spin-Hall heavy-metal underlayer.
///
/// Defaults are the TRNG device: 40 nm square free layer, 2 nm heavy metal,
/// `Ms = 1000 kA/m`, `θ_SH = 0.3`, a 20 kT barrier at 300 K, 1 ps step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MagnetParams {
    /// `Ms`, A/m.
    pub saturation_magnetization: f64,
    /// Gilbert damping `α`.
    pub gilbert_damping: f64,
    /// Energy barrier in units of `k_B·T` at `barrier_reference_temperature`.
    pub energy_barrier_kt: f64,
    /// Temperature at which the barrier is quoted, K.
    pub barrier_reference_temperature: f64,
    /// Operating temperature `T_K`, K. Zero disables the thermal field.
    pub temperature: f64,
    /// Free-layer width (square footprint), m.
    pub free_layer_width: f64,
    /// Free-layer thickness, m.
    pub free_layer_thickness: f64,
    /// Heavy-metal thickness `t_HM`, m.
    pub heavy_metal_thickness: f64,
    /// Spin-Hall angle `θ_SH`.
    pub spin_hall_angle: f64,
    /// Integrator timestep `δ_t`, s.
    pub timestep: f64,
}

impl Default for MagnetParams {
    fn default() -> Self {
        Self {
            saturation_magnetization: 1.0e6,
            gilbert_damping: 0.1,
            energy_barrier_kt: 20.0,
            barrier_reference_temperature: 300.0,
            temperature: 300.0,
            free_layer_width: 40e-9,
            free_layer_thickness: 1.2e-9,
            heavy_metal_thickness: 2e-9,
            spin_hall_angle: 0.3,
            timestep: 1e-12,
        }
    }
}

impl MagnetParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("saturation_magnetization", self.saturation_magnetization),
            ("gilbert_damping", self.gilbert_damping),
            ("energy_barrier_kt", self.energy_barrier_kt),
            ("barrier_reference_temperature", self.barrier_reference_temperature),
            ("free_layer_width", self.free_layer_width),
            ("free_layer_thickness", self.free_layer_thickness),
            ("heavy_metal_thickness", self.heavy_metal_thickness),
            ("timestep", self.timestep),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid_param(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(invalid_param(format!(
                "temperature must be non-negative, got {}",
                self.temperature
            )));
        }
        if !self.spin_hall_angle.is_finite() {
            return Err(invalid_param("spin_hall_angle must be finite"));
        }
        Ok(())
    }

    /// Free-layer volume `V`, m³.
    pub fn volume(&self) -> f64 {
        self.free_layer_width * self.free_layer_width * self.free_layer_thickness
    }

    /// Number of spins `N_s = Ms·V/μ_B`.
    pub fn spin_count(&self) -> f64 {
        self.saturation_magnetization * self.volume() / MU_B
    }

    /// Barrier height in joules.
    pub fn energy_barrier(&self) -> f64 {
        self.energy_barrier_kt * K_B * self.barrier_reference_temperature
    }

    /// Uniaxial anisotropy field `H_k = 2·E_B/(μ0·Ms·V)`, A/m.
    pub fn anisotropy_field(&self) -> f64 {
        2.0 * self.energy_barrier() / (MU_0 * self.saturation_magnetization * self.volume())
    }

    /// MTJ footprint `A_MTJ = width²`.
    pub fn mtj_area(&self) -> f64 {
        self.free_layer_width * self.free_layer_width
    }

    /// Heavy-metal cross section `A_HM = width·t_HM`.
    pub fn heavy_metal_area(&self) -> f64 {
        self.free_layer_width * self.heavy_metal_thickness
    }

    /// Standard deviation of each thermal-field component, A/m.
    pub fn thermal_field_std(&self) -> f64 {
        let a = self.gilbert_damping;
        let var = a / (1.0 + a * a) * 2.0 * K_B * self.temperature
            / (GAMMA * MU_0 * self.saturation_magnetization * self.volume() * self.timestep);
        var.sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_quantities_are_positive() {
        let p = MagnetParams::default();
        p.validate().unwrap();
        assert!(p.volume() > 0.0);
        assert!(p.spin_count() > 0.0);
        assert!(p.anisotropy_field() > 0.0);
        // 40 nm × 40 nm × 1.2 nm at 1000 kA/m holds ~2.07e5 spins.
        assert!((p.spin_count() / 2.07e5 - 1.0).abs() < 0.01);
        // μ0·H_k ≈ 86 mT for a 20 kT barrier in that volume.
        assert!((MU_0 * p.anisotropy_field() - 0.0863).abs() < 1e-3);
    }

    #[test]
    fn gamma_matches_electron_value() {
        // γ/μ0 = 2μ_B/ħ = 1.7588e11 rad/(s·T) for g = 2
        assert!((GAMMA / MU_0 / 1.7588e11 - 1.0).abs() < 1e-4);
    }

    #[test]
    fn rejects_nonpositive_geometry() {
        let p = MagnetParams {
            heavy_metal_thickness: 0.0,
            ..Default::default()
        };
        assert!(p.validate().is_err());
        let p = MagnetParams {
            timestep: -1.0,
            ..Default::default()
        };
        assert!(p.validate().is_err());
    }
}
