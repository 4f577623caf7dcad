//! Experiment configuration, one TOML section per subsystem.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bayes::{HardwareConfig, PriorSpec, TrainConfig};
use crate::crossbar::ConverterSpec;
use crate::energy::EnergyConstants;
use crate::error::{invalid_param, Error, Result};
use crate::magnetodynamics::{DwDeviceParams, MagnetParams, NeuronParams, PulseSpec, TrngCell};
use crate::sampling::GaussianSamplerConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Every artifact is written below this directory.
    pub output_dir: PathBuf,
    pub data: DataSection,
    pub magnetodynamics: MagnetParams,
    pub trng: TrngSection,
    pub domain_wall: DwDeviceParams,
    pub neuron: NeuronParams,
    pub sampling: GaussianSamplerConfig,
    pub crossbar: CrossbarSection,
    pub network: NetworkSection,
    pub training: TrainConfig,
    pub evaluation: EvaluationSection,
    pub energy: EnergyConstants,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            output_dir: PathBuf::from("out"),
            data: DataSection::default(),
            magnetodynamics: MagnetParams::default(),
            trng: TrngSection::default(),
            domain_wall: DwDeviceParams::default(),
            neuron: NeuronParams::default(),
            sampling: GaussianSamplerConfig::default(),
            crossbar: CrossbarSection::default(),
            network: NetworkSection::default(),
            training: TrainConfig::default(),
            evaluation: EvaluationSection::default(),
            energy: EnergyConstants::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// IDX directory; falls back to the environment variable, then `data/mnist`.
    pub dir: Option<PathBuf>,
    /// Stratified training subset size.
    pub train_subset: Option<usize>,
    /// Stratified test subset size.
    pub test_subset: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrngSection {
    pub pulse: PulseSpec,
    pub relax_time: f64,
    pub max_retries: u32,
    pub hm_resistance: f64,
}

impl Default for TrngSection {
    fn default() -> Self {
        let c = TrngCell::default();
        Self {
            pulse: c.pulse,
            relax_time: c.relax_time,
            max_retries: c.max_retries,
            hm_resistance: c.hm_resistance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrossbarSection {
    /// Bits per conductance line; 0 programs weights continuously.
    pub weight_bits: u32,
    pub converters: ConverterSpec,
    pub weight_percentile: f64,
    pub hidden_adc_range: f64,
    pub output_adc_headroom: f64,
    pub sigma_adc_range: f64,
    pub calibration_inputs: usize,
}

impl Default for CrossbarSection {
    fn default() -> Self {
        let h = HardwareConfig::default();
        Self {
            weight_bits: 4,
            converters: h.converters,
            weight_percentile: h.weight_percentile,
            hidden_adc_range: h.hidden_adc_range,
            output_adc_headroom: h.output_adc_headroom,
            sigma_adc_range: h.sigma_adc_range,
            calibration_inputs: h.calibration_inputs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSection {
    pub dims: Vec<usize>,
    pub prior: PriorSpec,
}

impl Default for NetworkSection {
    fn default() -> Self {
        Self {
            dims: vec![784, 200, 200, 10],
            prior: PriorSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationSection {
    /// Networks averaged per prediction.
    pub samples: usize,
    /// Relative conductance variation for hardware Monte-Carlo runs.
    pub variation: f64,
    pub mc_runs: usize,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        Self {
            samples: 10,
            variation: 0.0,
            mc_runs: 5,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let c: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&s)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.magnetodynamics.validate()?;
        self.trng_cell().pulse.validate(&self.magnetodynamics)?;
        self.training.validate()?;
        self.energy.validate()?;
        self.hardware_config()?.validate()?;
        if self.network.dims.len() < 2 || self.network.dims.contains(&0) {
            return Err(invalid_param("network dims need at least two positive sizes"));
        }
        self.network.prior.validate()?;
        if self.evaluation.samples == 0 || !(self.evaluation.variation >= 0.0) {
            return Err(invalid_param("evaluation needs samples >= 1 and variation >= 0"));
        }
        Ok(())
    }

    pub fn trng_cell(&self) -> TrngCell {
        TrngCell {
            magnet: self.magnetodynamics.clone(),
            pulse: self.trng.pulse.clone(),
            relax_time: self.trng.relax_time,
            max_retries: self.trng.max_retries,
            hm_resistance: self.trng.hm_resistance,
        }
    }

    pub fn hardware_config(&self) -> Result<HardwareConfig> {
        let weight_levels = match self.crossbar.weight_bits {
            0 => None,
            b @ 1..=16 => Some(1u32 << b),
            b => return Err(invalid_param(format!("weight_bits must be at most 16, got {b}"))),
        };
        Ok(HardwareConfig {
            weight_levels,
            device: self.domain_wall.clone(),
            neuron: self.neuron.clone(),
            converters: self.crossbar.converters.clone(),
            sampler: self.sampling.clone(),
            trng: self.trng_cell(),
            weight_percentile: self.crossbar.weight_percentile,
            hidden_adc_range: self.crossbar.hidden_adc_range,
            output_adc_headroom: self.crossbar.output_adc_headroom,
            sigma_adc_range: self.crossbar.sigma_adc_range,
            calibration_inputs: self.crossbar.calibration_inputs,
        })
    }

    /// Dataset directory: config value, else environment, else default.
    pub fn data_dir(&self) -> PathBuf {
        self.data.dir.clone().unwrap_or_else(crate::dataset::data_dir)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let c = ExperimentConfig::default();
        let s = c.to_toml_string().unwrap();
        assert!(s.contains("[energy]"));
        assert_eq!(ExperimentConfig::from_toml_str(&s).unwrap(), c);
    }

    #[test]
    fn partial_file_overrides_keys() {
        let c = ExperimentConfig::from_toml_str(
            "seed = 3\n[energy]\ntrng_bit_energy = 1e-15\n[magnetodynamics]\ntemperature = 77.0\n",
        )
        .unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.energy.trng_bit_energy, 1e-15);
        assert_eq!(c.energy.column_read_time, 10e-9);
        assert_eq!(c.trng_cell().magnet.temperature, 77.0);
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        assert!(matches!(
            ExperimentConfig::from_toml_str("[energy]\nbogus = 1\n"),
            Err(Error::Config(_))
        ));
        assert!(ExperimentConfig::from_toml_str("[energy]\ntrng_bit_energy = -1.0\n").is_err());
        assert!(ExperimentConfig::from_toml_str("[crossbar]\nweight_bits = 40\n").is_err());
    }
}
