//! Spintronic device models: the stochastic mono-domain MTJ used as a random
//! bit source, and behavioral domain-wall MTJ synapses and neurons.

mod domain_wall;
mod llg;
mod params;
mod trng;
mod vec3;

pub use domain_wall::{
    dw_conductance, dw_displace, neuron_transfer, DomainWall, DwDeviceParams, NeuronParams,
    Table2Metadata,
};
pub use llg::{llg_step, spin_current, thermal_field, MacrospinState};
pub use params::{MagnetParams, GAMMA, HBAR, K_B, MU_0, MU_B, Q_E};
pub use trng::{
    estimate_switching_probability, simulate_reset_relax, trng_bit_energy, BitOutcome, PulseSpec,
    SwitchingEstimate, TrngCell, DEFAULT_HM_RESISTANCE,
};
pub use vec3::Vec3;
