//! Reset-relax true random bit generation on a spin-Hall MTJ.
//!
//! A heavy-metal current pulse injects in-plane (ŷ) spin current strong enough
//! to hold the perpendicular magnet on its hard axis. When the pulse ends the
//! magnet sits at a metastable point and thermal noise decides which easy-axis
//! state it falls into.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::llg::{integrate, spin_current, LlgKernel, MacrospinState};
use super::params::MagnetParams;
use super::vec3::Vec3;
use crate::error::{invalid_param, Error, Result};
use crate::rng::stream_rng;

/// Heavy-metal resistance that reproduces 57 fJ for a 140 µA, 1 ns reset pulse.
pub const DEFAULT_HM_RESISTANCE: f64 = 2908.0;

/// Heavy-metal charge-current pulse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PulseSpec {
    /// `I_q`, A.
    pub charge_current: f64,
    /// Pulse length, s.
    pub duration: f64,
    /// Spin polarization direction of the injected spin current.
    pub polarization: Vec3,
}

impl Default for PulseSpec {
    fn default() -> Self {
        Self {
            charge_current: 140e-6,
            duration: 1e-9,
            polarization: Vec3::Y,
        }
    }
}

impl PulseSpec {
    pub fn validate(&self, params: &MagnetParams) -> Result<()> {
        if !(self.duration >= params.timestep) {
            return Err(invalid_param(format!(
                "pulse duration {} shorter than timestep {}",
                self.duration, params.timestep
            )));
        }
        if (self.polarization.norm() - 1.0).abs() > 1e-9 {
            return Err(invalid_param("pulse polarization must be a unit vector"));
        }
        Ok(())
    }
}

fn step_count(duration: f64, dt: f64) -> u64 {
    (duration / dt).round().max(0.0) as u64
}

/// Runs one reset pulse followed by `relax_time` of free relaxation.
///
/// Returns `true` (bit 1) when the magnet settles with `m_z > 0`.
pub fn simulate_reset_relax<R: Rng + ?Sized>(
    params: &MagnetParams,
    pulse: &PulseSpec,
    relax_time: f64,
    initial: MacrospinState,
    rng: &mut R,
) -> Result<bool> {
    let m = reset_then_relax(params, pulse, relax_time, initial.m, rng)?;
    resolve(m.z, relax_time)
}

fn reset_then_relax<R: Rng + ?Sized>(
    params: &MagnetParams,
    pulse: &PulseSpec,
    relax_time: f64,
    m: Vec3,
    rng: &mut R,
) -> Result<Vec3> {
    params.validate()?;
    pulse.validate(params)?;
    let kernel = LlgKernel::new(params);
    let spin = pulse.polarization * spin_current(pulse.charge_current, params)?;
    let m = integrate(&kernel, params, m, spin, step_count(pulse.duration, params.timestep), rng)?;
    integrate(&kernel, params, m, Vec3::ZERO, step_count(relax_time, params.timestep), rng)
}

fn resolve(m_z: f64, relax_time: f64) -> Result<bool> {
    if m_z.abs() < 0.9 {
        Err(Error::UnresolvedRelaxation { m_z, relax_time })
    } else {
        Ok(m_z > 0.0)
    }
}

/// A TRNG cell with its operating protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrngCell {
    pub magnet: MagnetParams,
    pub pulse: PulseSpec,
    /// Free relaxation after the pulse, s.
    pub relax_time: f64,
    /// Additional relaxation windows granted when the magnet has not settled.
    pub max_retries: u32,
    /// Heavy-metal write-path resistance, Ω.
    pub hm_resistance: f64,
}

impl Default for TrngCell {
    fn default() -> Self {
        Self {
            magnet: MagnetParams::default(),
            pulse: PulseSpec::default(),
            relax_time: 5e-9,
            max_retries: 4,
            hm_resistance: DEFAULT_HM_RESISTANCE,
        }
    }
}

/// Outcome of one bit generation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BitOutcome {
    pub bit: bool,
    /// Extra relaxation windows that were needed.
    pub retries: u32,
    pub final_state: MacrospinState,
}

impl TrngCell {
    /// Generates one bit starting from `initial`, extending the relaxation by
    /// `relax_time` up to `max_retries` times if the magnet is still near the
    /// hard axis.
    pub fn generate<R: Rng + ?Sized>(
        &self,
        initial: MacrospinState,
        rng: &mut R,
    ) -> Result<BitOutcome> {
        let mut m = reset_then_relax(&self.magnet, &self.pulse, self.relax_time, initial.m, rng)?;
        let kernel = LlgKernel::new(&self.magnet);
        let extra = step_count(self.relax_time, self.magnet.timestep);
        let mut retries = 0;
        loop {
            match resolve(m.z, self.relax_time) {
                Ok(bit) => {
                    return Ok(BitOutcome {
                        bit,
                        retries,
                        final_state: MacrospinState { m },
                    })
                }
                Err(e) if retries >= self.max_retries => return Err(e),
                Err(_) => {
                    retries += 1;
                    m = integrate(&kernel, &self.magnet, m, Vec3::ZERO, extra, rng)?;
                }
            }
        }
    }

    /// Energy of one reset pulse.
    pub fn bit_energy(&self) -> Result<f64> {
        trng_bit_energy(&self.pulse, self.hm_resistance)
    }
}

/// `I_q²·R·t` write energy of one reset pulse, J.
pub fn trng_bit_energy(pulse: &PulseSpec, hm_resistance: f64) -> Result<f64> {
    if !(hm_resistance > 0.0) {
        return Err(invalid_param(format!(
            "heavy-metal resistance must be positive, got {hm_resistance}"
        )));
    }
    Ok(pulse.charge_current * pulse.charge_current * hm_resistance * pulse.duration)
}

/// Monte-Carlo switching-probability estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchingEstimate {
    pub trials: u64,
    pub ones: u64,
    pub p_hat: f64,
    /// `3·sqrt(p(1-p)/trials)`.
    pub confidence_halfwidth: f64,
    /// Total extra relaxation windows used across all trials.
    pub retries: u64,
}

impl SwitchingEstimate {
    pub fn from_counts(ones: u64, trials: u64) -> Self {
        let p = if trials == 0 { 0.0 } else { ones as f64 / trials as f64 };
        let hw = if trials == 0 { 0.0 } else { 3.0 * (p * (1.0 - p) / trials as f64).sqrt() };
        Self {
            trials,
            ones,
            p_hat: p,
            confidence_halfwidth: hw,
            retries: 0,
        }
    }

    /// Whether `p` lies inside the 3σ band.
    pub fn contains(&self, p: f64) -> bool {
        (self.p_hat - p).abs() <= self.confidence_halfwidth
    }
}

/// Runs `trials` independent reset-relax cycles, each from `initial` on its own
/// entropy stream `(seed, trial)`. The result does not depend on thread count.
pub fn estimate_switching_probability(
    cell: &TrngCell,
    initial: MacrospinState,
    trials: u64,
    seed: u64,
) -> Result<SwitchingEstimate> {
    if trials < 100 {
        return Err(Error::InvalidArgument(format!("need at least 100 trials, got {trials}")));
    }
    let outcomes: Vec<BitOutcome> = (0..trials)
        .into_par_iter()
        .map(|t| cell.generate(initial, &mut stream_rng(seed, t)))
        .collect::<Result<_>>()?;
    let ones = outcomes.iter().filter(|o| o.bit).count() as u64;
    let mut est = SwitchingEstimate::from_counts(ones, trials);
    est.retries = outcomes.iter().map(|o| u64::from(o.retries)).sum();
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cold_cell() -> TrngCell {
        TrngCell {
            magnet: MagnetParams {
                temperature: 0.0,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn bit_energy_matches_57_fj() {
        let e = trng_bit_energy(&PulseSpec::default(), DEFAULT_HM_RESISTANCE).unwrap();
        assert!((e - 57e-15).abs() < 0.05e-15, "{e}");
        let zero = PulseSpec {
            charge_current: 0.0,
            ..Default::default()
        };
        assert_eq!(trng_bit_energy(&zero, 2908.0).unwrap(), 0.0);
        let long = PulseSpec {
            duration: 2e-9,
            ..Default::default()
        };
        let e2 = trng_bit_energy(&long, DEFAULT_HM_RESISTANCE).unwrap();
        assert!((e2 - 2.0 * e).abs() < 1e-24);
        assert!(trng_bit_energy(&zero, 0.0).is_err());
    }

    #[test]
    fn subcritical_cold_pulse_keeps_the_bit() {
        let cell = cold_cell();
        let weak = PulseSpec {
            charge_current: 10e-6,
            ..Default::default()
        };
        let mut rng = stream_rng(0, 0);
        let bit =
            simulate_reset_relax(&cell.magnet, &weak, 5e-9, MacrospinState::up(), &mut rng).unwrap();
        assert!(bit);
    }

    #[test]
    fn cold_hard_axis_reset_needs_retries() {
        let cell = cold_cell();
        let mut rng = stream_rng(0, 0);
        let r = simulate_reset_relax(
            &cell.magnet,
            &cell.pulse,
            5e-9,
            MacrospinState::up(),
            &mut rng,
        );
        assert!(matches!(r, Err(Error::UnresolvedRelaxation { .. })), "{r:?}");
        let strict = TrngCell {
            max_retries: 0,
            ..cell.clone()
        };
        assert!(matches!(
            strict.generate(MacrospinState::up(), &mut rng),
            Err(Error::UnresolvedRelaxation { .. })
        ));
        // extended relaxation lets the precession residue settle
        let out = cell.generate(MacrospinState::up(), &mut rng).unwrap();
        assert!(out.retries > 0);
    }

    #[test]
    fn pulse_must_cover_a_timestep() {
        let cell = TrngCell::default();
        let short = PulseSpec {
            duration: 1e-13,
            ..Default::default()
        };
        let mut rng = stream_rng(0, 0);
        assert!(simulate_reset_relax(&cell.magnet, &short, 5e-9, MacrospinState::up(), &mut rng)
            .is_err());
    }

    #[test]
    fn identical_seeds_give_identical_bits() {
        let cell = TrngCell::default();
        let bits = |seed| {
            let mut rng = stream_rng(seed, 0);
            (0..20)
                .map(|_| cell.generate(MacrospinState::up(), &mut rng).unwrap().bit)
                .collect::<Vec<_>>()
        };
        assert_eq!(bits(11), bits(11));
    }

    #[test]
    fn degenerate_estimate() {
        let e = SwitchingEstimate::from_counts(0, 500);
        assert_eq!((e.p_hat, e.confidence_halfwidth), (0.0, 0.0));
        assert!(estimate_switching_probability(&TrngCell::default(), MacrospinState::up(), 10, 0)
            .is_err());
    }
}
