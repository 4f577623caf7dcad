//! Stochastic macrospin Landau-Lifshitz-Gilbert dynamics with spin-Hall torque.
//!
//! The Gilbert-form equation
//!
//! ```text
//! dm/dt = -γ m×H + α m×dm/dt + (1/(q·N_s)) m×(I_s×m)
//! ```
//!
//! is solved in its explicit Landau-Lifshitz form: with
//! `A = -γ m×H + (1/(q·N_s)) m×(I_s×m)`,
//! `(1+α²) dm/dt = A + α m×A`.
//!
//! Integration is stochastic Heun: the thermal field is drawn once per step and
//! held across predictor and corrector, which converges to the Stratonovich
//! solution. The state is renormalized after every step.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::params::{MagnetParams, GAMMA, Q_E};
use super::vec3::Vec3;
use crate::error::{Error, Result};

/// Free-layer magnetization direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacrospinState {
    pub m: Vec3,
}

impl MacrospinState {
    pub fn new(m: Vec3) -> Result<Self> {
        let n = m.norm();
        if !m.is_finite() || n == 0.0 {
            return Err(Error::InvalidArgument(format!(
                "magnetization must be a finite nonzero vector, got {m:?}"
            )));
        }
        Ok(Self { m: m * (1.0 / n) })
    }

    pub fn up() -> Self {
        Self { m: Vec3::Z }
    }

    pub fn down() -> Self {
        Self { m: -Vec3::Z }
    }

    /// Magnetization tilted by `theta` radians from `+z` toward `+x`.
    pub fn tilted(theta: f64) -> Self {
        Self {
            m: Vec3::new(theta.sin(), 0.0, theta.cos()),
        }
    }
}

/// Spin current injected by charge current `charge_current` through the heavy metal:
/// `I_s = θ_SH·(A_MTJ/A_HM)·I_q`.
pub fn spin_current(charge_current: f64, params: &MagnetParams) -> Result<f64> {
    params.validate()?;
    Ok(params.spin_hall_angle * (params.mtj_area() / params.heavy_metal_area()) * charge_current)
}

/// One draw of the thermal field, A/m. Zero at `T_K = 0`.
pub fn thermal_field<R: Rng + ?Sized>(params: &MagnetParams, rng: &mut R) -> Vec3 {
    let std = params.thermal_field_std();
    if std == 0.0 {
        return Vec3::ZERO;
    }
    Vec3::new(
        std * rng.sample::<f64, _>(StandardNormal),
        std * rng.sample::<f64, _>(StandardNormal),
        std * rng.sample::<f64, _>(StandardNormal),
    )
}

/// Precomputed per-device constants for the right-hand side.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LlgKernel {
    alpha: f64,
    anisotropy_field: f64,
    /// `1/(q·N_s)`
    torque_prefactor: f64,
    dt: f64,
}

impl LlgKernel {
    pub(crate) fn new(params: &MagnetParams) -> Self {
        Self {
            alpha: params.gilbert_damping,
            anisotropy_field: params.anisotropy_field(),
            torque_prefactor: 1.0 / (Q_E * params.spin_count()),
            dt: params.timestep,
        }
    }

    fn rhs(&self, m: Vec3, h_thermal: Vec3, spin: Vec3) -> Vec3 {
        let h_eff = Vec3::new(0.0, 0.0, self.anisotropy_field * m.z) + h_thermal;
        let a = m.cross(h_eff) * -GAMMA + m.cross(spin.cross(m)) * self.torque_prefactor;
        (a + m.cross(a) * self.alpha) * (1.0 / (1.0 + self.alpha * self.alpha))
    }

    /// Heun step with a fixed thermal field sample.
    pub(crate) fn step(&self, m: Vec3, h_thermal: Vec3, spin: Vec3) -> Vec3 {
        let k1 = self.rhs(m, h_thermal, spin);
        let predictor = (m + k1 * self.dt).normalized();
        let k2 = self.rhs(predictor, h_thermal, spin);
        (m + (k1 + k2) * (0.5 * self.dt)).normalized()
    }
}

/// Advances the state by one timestep under spin current vector `spin_current`
/// (amperes, direction = spin polarization).
pub fn llg_step<R: Rng + ?Sized>(
    state: MacrospinState,
    spin_current: Vec3,
    params: &MagnetParams,
    rng: &mut R,
) -> Result<MacrospinState> {
    if !state.m.is_finite() {
        return Err(Error::NumericalFailure(format!("non-finite magnetization {:?}", state.m)));
    }
    let kernel = LlgKernel::new(params);
    let h = thermal_field(params, rng);
    let m = kernel.step(state.m, h, spin_current);
    if !m.is_finite() {
        return Err(Error::NumericalFailure(format!("integrator produced {m:?}")));
    }
    Ok(MacrospinState { m })
}

/// Integrates `steps` timesteps under constant spin current.
pub(crate) fn integrate<R: Rng + ?Sized>(
    kernel: &LlgKernel,
    params: &MagnetParams,
    mut m: Vec3,
    spin: Vec3,
    steps: u64,
    rng: &mut R,
) -> Result<Vec3> {
    let std = params.thermal_field_std();
    for _ in 0..steps {
        let h = if std > 0.0 {
            Vec3::new(
                std * rng.sample::<f64, _>(StandardNormal),
                std * rng.sample::<f64, _>(StandardNormal),
                std * rng.sample::<f64, _>(StandardNormal),
            )
        } else {
            Vec3::ZERO
        };
        m = kernel.step(m, h, spin);
    }
    if !m.is_finite() {
        return Err(Error::NumericalFailure(format!("integrator produced {m:?}")));
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    fn cold() -> MagnetParams {
        MagnetParams {
            temperature: 0.0,
            ..Default::default()
        }
    }

    #[test]
    fn spin_current_geometry_ratio() {
        let p = MagnetParams::default();
        assert_eq!(spin_current(0.0, &p).unwrap(), 0.0);
        let i = spin_current(140e-6, &p).unwrap();
        assert!((i - 840e-6).abs() < 1e-12, "{i}");
        let i2 = spin_current(280e-6, &p).unwrap();
        assert!((i2 - 2.0 * i).abs() < 1e-15);
    }

    #[test]
    fn spin_current_rejects_bad_geometry() {
        let p = MagnetParams {
            free_layer_width: 0.0,
            ..Default::default()
        };
        assert!(matches!(spin_current(1e-6, &p), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn zero_temperature_has_no_thermal_field() {
        let mut rng = stream_rng(1, 0);
        assert_eq!(thermal_field(&cold(), &mut rng), Vec3::ZERO);
    }

    #[test]
    fn thermal_field_moments() {
        let p = MagnetParams::default();
        let expected_var = p.thermal_field_std().powi(2);
        let mut rng = stream_rng(3, 0);
        let n = 100_000;
        let (mut sx, mut sy, mut sz, mut sxy, mut sxz, mut syz) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        for _ in 0..n {
            let h = thermal_field(&p, &mut rng);
            sx += h.x * h.x;
            sy += h.y * h.y;
            sz += h.z * h.z;
            sxy += h.x * h.y;
            sxz += h.x * h.z;
            syz += h.y * h.z;
        }
        let n = n as f64;
        for s in [sx, sy, sz] {
            assert!((s / n / expected_var - 1.0).abs() < 0.05);
        }
        for c in [sxy, sxz, syz] {
            let corr = c / n / expected_var;
            assert!(corr.abs() < 0.02, "cross-correlation {corr}");
        }
    }

    #[test]
    fn easy_axis_is_a_fixed_point() {
        let p = cold();
        let mut rng = stream_rng(0, 0);
        let mut s = MacrospinState::up();
        for _ in 0..1000 {
            s = llg_step(s, Vec3::ZERO, &p, &mut rng).unwrap();
        }
        assert_eq!(s.m, Vec3::Z);
    }

    #[test]
    fn tilted_state_relaxes_monotonically() {
        let p = cold();
        let mut rng = stream_rng(0, 0);
        let mut s = MacrospinState::tilted(0.3);
        let mut last = s.m.z;
        for _ in 0..5000 {
            s = llg_step(s, Vec3::ZERO, &p, &mut rng).unwrap();
            assert!(s.m.z >= last - 1e-15, "m_z decreased: {} -> {}", last, s.m.z);
            last = s.m.z;
        }
        assert!(last > 0.999);
    }

    #[test]
    fn norm_is_preserved_under_noise_and_torque() {
        let p = MagnetParams::default();
        let mut rng = stream_rng(9, 0);
        let mut s = MacrospinState::tilted(1.0);
        for i in 0..20_000 {
            let spin = if i < 5000 { Vec3::Y * 840e-6 } else { Vec3::ZERO };
            s = llg_step(s, spin, &p, &mut rng).unwrap();
            assert!((s.m.norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn nan_state_is_a_numerical_failure() {
        let s = MacrospinState {
            m: Vec3::new(f64::NAN, 0.0, 1.0),
        };
        let mut rng = stream_rng(0, 0);
        assert!(matches!(
            llg_step(s, Vec3::ZERO, &MagnetParams::default(), &mut rng),
            Err(Error::NumericalFailure(_))
        ));
    }

    #[test]
    fn zero_temperature_trajectories_are_bitwise_reproducible() {
        let p = cold();
        let run = |seed| {
            let mut rng = stream_rng(seed, 0);
            let mut s = MacrospinState::tilted(0.7);
            for _ in 0..3000 {
                s = llg_step(s, Vec3::Y * 300e-6, &p, &mut rng).unwrap();
            }
            s.m
        };
        assert_eq!(run(1), run(2));
    }
}
