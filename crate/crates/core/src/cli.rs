//! `spinbayes` command-line harness.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::bayes::{
    evaluate, hardware_evaluate, init_network, train, Checkpoint, HardwareNet, TrainLog,
    TrainingRecord,
};
use crate::config::ExperimentConfig;
use crate::dataset::{load_mnist, Dataset, Split};
use crate::energy::{inference_energy_report, ledger_from_counts, EnergyLedger, ScheduleCounts};
use crate::error::{Error, Result};
use crate::magnetodynamics::{estimate_switching_probability, MacrospinState, SwitchingEstimate};
use crate::report::{OutputDir, Report};
use crate::rng::{derive_seed, stream_rng};
use crate::sampling::{rng_report, BitSourceKind};

#[derive(Debug, Parser)]
#[command(name = "spinbayes", version, about = "Spintronic Bayesian network co-simulation")]
pub struct Cli {
    /// TOML experiment configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Global seed; overrides the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// MNIST IDX directory; overrides the config and environment.
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the Bayesian network and write a checkpoint.
    Train(TrainArgs),
    /// Software ensemble accuracy of a checkpoint.
    Eval(EvalArgs),
    /// Crossbar-constrained accuracy, optionally with conductance variation.
    HwEval(HwEvalArgs),
    /// Statistics of the central-limit Gaussian sampler.
    RngTest(RngTestArgs),
    /// Switching-probability study of the random-bit cell.
    DeviceMc(DeviceMcArgs),
    /// Per-classification energy ledger.
    Energy(EnergyArgs),
    /// Write the programmed conductances of a checkpoint.
    Export(ExportArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Use only the first N training images.
    #[arg(long)]
    pub train_subset: Option<usize>,
    /// Use only the first N test images.
    #[arg(long)]
    pub test_subset: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CheckpointArg {
    /// Checkpoint to read; defaults to `checkpoint.json` in the output directory.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub ckpt: CheckpointArg,
    /// Stochastic passes averaged per prediction.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Use only the first N test images.
    #[arg(long)]
    pub test_subset: Option<usize>,
}

#[derive(Debug, Args)]
pub struct HwEvalArgs {
    #[command(flatten)]
    pub ckpt: CheckpointArg,
    /// Stochastic passes averaged per prediction.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Use only the first N test images.
    #[arg(long)]
    pub test_subset: Option<usize>,
    /// Bits per conductance line (0 = continuous).
    #[arg(long)]
    pub weight_bits: Option<u32>,
    /// Neuron output bits (0 = unquantized).
    #[arg(long)]
    pub neuron_bits: Option<u32>,
    /// Relative conductance variation.
    #[arg(long)]
    pub variation: Option<f64>,
    /// Independent variation instances.
    #[arg(long)]
    pub mc_runs: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BitSourceArg {
    Ideal,
    Llg,
}

#[derive(Debug, Args)]
pub struct RngTestArgs {
    /// Samples to draw.
    #[arg(long, default_value_t = 100_000)]
    pub count: usize,
    /// Random-bit model feeding the sampler.
    #[arg(long, value_enum)]
    pub bit_source: Option<BitSourceArg>,
    /// Uniform bit width n.
    #[arg(long)]
    pub bits: Option<u32>,
    /// Rows averaged N.
    #[arg(long)]
    pub rows: Option<u32>,
}

#[derive(Debug, Args)]
pub struct DeviceMcArgs {
    /// Independent reset trials.
    #[arg(long, default_value_t = 10_000)]
    pub trials: u64,
    /// Reset charge current, A.
    #[arg(long)]
    pub current: Option<f64>,
    /// Reset pulse length, s.
    #[arg(long)]
    pub pulse: Option<f64>,
    /// Relaxation window, s.
    #[arg(long)]
    pub relax: Option<f64>,
    /// Temperature, K.
    #[arg(long)]
    pub temperature: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EnergyArgs {
    /// Meter a pass of this checkpoint; without it only dimension-derived counts are used.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Stochastic passes to meter.
    #[arg(long, default_value_t = 1)]
    pub passes: u64,
    /// Test image driven through the metered pass.
    #[arg(long, default_value_t = 0)]
    pub image: usize,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[command(flatten)]
    pub ckpt: CheckpointArg,
    /// Relative conductance variation applied before writing.
    #[arg(long)]
    pub variation: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainResult {
    pub checkpoint: String,
    pub train_items: usize,
    pub test_items: usize,
    pub log: TrainLog,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalResult {
    pub checkpoint: String,
    pub samples: usize,
    pub test_items: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HwEvalResult {
    pub checkpoint: String,
    pub samples: usize,
    pub test_items: usize,
    pub weight_levels: Option<u32>,
    pub neuron_levels: u32,
    pub quantized_accuracy: f64,
    pub variation: f64,
    pub variation_accuracies: Vec<f64>,
    pub mean_variation_accuracy: Option<f64>,
    pub mean_degradation: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeviceMcResult {
    pub charge_current: f64,
    pub pulse_duration: f64,
    pub relax_time: f64,
    pub temperature: f64,
    pub estimate: SwitchingEstimate,
    pub bit_energy: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnergyResult {
    /// `metered` walks a programmed network; `counted` derives counts from dims.
    pub mode: String,
    pub dims: Vec<usize>,
    pub ledger: EnergyLedger,
    pub per_pass_total: f64,
    pub cmos_ratio: Option<f64>,
}

/// Parses `argv` and runs the command; returns the process exit code.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(paths) => {
            for p in paths {
                println!("wrote {}", p.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn resolve_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut c = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(o) = &cli.out {
        c.output_dir = o.clone();
    }
    if let Some(s) = cli.seed {
        c.seed = s;
    }
    if let Some(d) = &cli.data_dir {
        c.data.dir = Some(d.clone());
    }
    Ok(c)
}

fn load_split(c: &ExperimentConfig, split: Split, subset: Option<usize>) -> Result<Dataset> {
    let d = load_mnist(&c.data_dir(), split)?;
    match subset {
        Some(n) if n < d.len() => d.stratified_subset(n, derive_seed(c.seed, "subset")),
        _ => Ok(d),
    }
}

fn checkpoint_path(out: &OutputDir, arg: &Option<PathBuf>) -> Result<PathBuf> {
    match arg {
        Some(p) => Ok(p.clone()),
        None => out.path("checkpoint.json"),
    }
}

fn program(c: &ExperimentConfig, ckpt: &Path) -> Result<HardwareNet> {
    let net = Checkpoint::load(ckpt)?.to_net()?;
    let hw_cfg = c.hardware_config()?;
    let train_set = load_mnist(&c.data_dir(), Split::Train)?;
    let n = hw_cfg.calibration_inputs.clamp(1, train_set.len());
    HardwareNet::program(&net, &hw_cfg, train_set.images.slice(ndarray::s![..n, ..]))
}

/// Runs a parsed command; returns the artifact paths written.
pub fn execute(cli: Cli) -> Result<Vec<PathBuf>> {
    let mut c = resolve_config(&cli)?;
    let out = OutputDir::create(&c.output_dir)?;
    match cli.command {
        Command::Train(a) => {
            if let Some(e) = a.epochs {
                c.training.epochs = e;
            }
            if a.train_subset.is_some() {
                c.data.train_subset = a.train_subset;
            }
            if a.test_subset.is_some() {
                c.data.test_subset = a.test_subset;
            }
            c.validate()?;
            let train_set = load_split(&c, Split::Train, c.data.train_subset)?;
            let test_set = load_split(&c, Split::Test, c.data.test_subset)?;
            let mut net = init_network(&c.network.dims, c.network.prior.clone(), &train_set, &c.training, c.seed)?;
            let log = train(&mut net, &train_set, Some(&test_set), &c.training, c.seed)?;
            let record = TrainingRecord {
                seed: c.seed,
                config: c.training.clone(),
                log: log.clone(),
                train_items: train_set.len(),
            };
            let ck = out.path("checkpoint.json")?;
            Checkpoint::from_net(&net, Some(record)).save(&ck)?;
            let mut summary = String::from("epoch  loss          train    test     mean σ\n");
            for e in &log.epochs {
                summary += &format!(
                    "{:>5}  {:<12.4} {:<8} {:<8} {:.5}\n",
                    e.epoch,
                    e.mean_loss,
                    e.train_accuracy.map_or("-".into(), |v| format!("{:.4}", v)),
                    e.test_accuracy.map_or("-".into(), |v| format!("{:.4}", v)),
                    e.mean_sigma
                );
            }
            let result = TrainResult {
                checkpoint: "checkpoint.json".into(),
                train_items: train_set.len(),
                test_items: test_set.len(),
                log,
            };
            let (j, t) = out.write_report("train", &Report::new("train", &c, result), &summary)?;
            Ok(vec![ck, j, t])
        }
        Command::Eval(a) => {
            let samples = a.samples.unwrap_or(c.evaluation.samples);
            c.evaluation.samples = samples;
            if a.test_subset.is_some() {
                c.data.test_subset = a.test_subset;
            }
            c.validate()?;
            let ck = checkpoint_path(&out, &a.ckpt.checkpoint)?;
            let net = Checkpoint::load(&ck)?.to_net()?;
            let test_set = load_split(&c, Split::Test, c.data.test_subset)?;
            let acc = evaluate(&net, &test_set, samples, derive_seed(c.seed, "eval"))?;
            let result = EvalResult {
                checkpoint: ck.display().to_string(),
                samples,
                test_items: test_set.len(),
                accuracy: acc,
            };
            let summary = format!("software accuracy {:.4} on {} test items, S = {samples}\n", acc, test_set.len());
            let (j, t) = out.write_report("eval", &Report::new("eval", &c, result), &summary)?;
            Ok(vec![j, t])
        }
        Command::HwEval(a) => {
            if let Some(b) = a.weight_bits {
                c.crossbar.weight_bits = b;
            }
            if let Some(b) = a.neuron_bits {
                c.neuron.output_levels = if b == 0 { 0 } else { 1 << b };
            }
            if let Some(s) = a.samples {
                c.evaluation.samples = s;
            }
            if let Some(v) = a.variation {
                c.evaluation.variation = v;
            }
            if let Some(m) = a.mc_runs {
                c.evaluation.mc_runs = m;
            }
            if a.test_subset.is_some() {
                c.data.test_subset = a.test_subset;
            }
            c.validate()?;
            let ck = checkpoint_path(&out, &a.ckpt.checkpoint)?;
            let hw = program(&c, &ck)?;
            let test_set = load_split(&c, Split::Test, c.data.test_subset)?;
            let samples = c.evaluation.samples;
            let sampler_seed = derive_seed(c.seed, "hw-eval");
            let base = hardware_evaluate(&hw, &test_set, samples, sampler_seed)?;
            let mut accs = Vec::new();
            if c.evaluation.variation > 0.0 {
                for k in 0..c.evaluation.mc_runs {
                    let mut rng = stream_rng(derive_seed(c.seed, "variation"), k as u64);
                    let varied = hw.with_variation(c.evaluation.variation, &mut rng)?;
                    accs.push(hardware_evaluate(&varied, &test_set, samples, sampler_seed)?);
                }
            }
            let mean = (!accs.is_empty()).then(|| accs.iter().sum::<f64>() / accs.len() as f64);
            let mut summary = format!(
                "hardware accuracy {:.4} on {} test items, S = {samples}\n",
                base,
                test_set.len()
            );
            for (k, v) in accs.iter().enumerate() {
                summary += &format!("variation {:.0}% run {k}: {:.4}\n", 100.0 * c.evaluation.variation, v);
            }
            if let Some(m) = mean {
                summary += &format!("mean {:.4}, degradation {:.4}\n", m, base - m);
            }
            let result = HwEvalResult {
                checkpoint: ck.display().to_string(),
                samples,
                test_items: test_set.len(),
                weight_levels: hw.config.weight_levels,
                neuron_levels: hw.config.neuron.output_levels,
                quantized_accuracy: base,
                variation: c.evaluation.variation,
                variation_accuracies: accs,
                mean_variation_accuracy: mean,
                mean_degradation: mean.map(|m| base - m),
            };
            let (j, t) = out.write_report("hw-eval", &Report::new("hw-eval", &c, result), &summary)?;
            Ok(vec![j, t])
        }
        Command::RngTest(a) => {
            if let Some(b) = a.bit_source {
                c.sampling.bit_source = match b {
                    BitSourceArg::Ideal => BitSourceKind::Ideal,
                    BitSourceArg::Llg => BitSourceKind::Llg,
                };
            }
            if let Some(b) = a.bits {
                c.sampling.bit_width = b;
            }
            if let Some(r) = a.rows {
                c.sampling.rows_averaged = r;
            }
            c.validate()?;
            let r = rng_report(&c.sampling, &c.trng_cell(), derive_seed(c.seed, "rng-test"), a.count)?;
            let summary = format!(
                "{} samples, n = {}, N = {}\nmean {:.5}  variance {:.5}  skewness {:.4}  excess kurtosis {:.4}\n\
                 KS vs Irwin-Hall D = {:.5} (1% critical {:.5}) {}\nKS vs normal D = {:.5}\n\
                 chi-square {:.2} on {} dof, p = {:.4}\nbit balance {:.5}\n",
                r.count,
                r.config.bit_width,
                r.config.rows_averaged,
                r.moments.mean,
                r.moments.variance,
                r.moments.skewness,
                r.moments.excess_kurtosis,
                r.ks_irwin_hall.statistic,
                r.ks_irwin_hall.critical_value_1pct,
                if r.ks_irwin_hall.pass { "pass" } else { "fail" },
                r.ks_normal.statistic,
                r.chi_square.statistic,
                r.chi_square.dof,
                r.chi_square.p_value,
                r.bit_balance.fraction
            );
            let (j, t) = out.write_report("rng-test", &Report::new("rng-test", &c, r), &summary)?;
            Ok(vec![j, t])
        }
        Command::DeviceMc(a) => {
            if let Some(i) = a.current {
                c.trng.pulse.charge_current = i;
            }
            if let Some(p) = a.pulse {
                c.trng.pulse.duration = p;
            }
            if let Some(r) = a.relax {
                c.trng.relax_time = r;
            }
            if let Some(t) = a.temperature {
                c.magnetodynamics.temperature = t;
            }
            c.validate()?;
            let cell = c.trng_cell();
            let est = estimate_switching_probability(
                &cell,
                MacrospinState::up(),
                a.trials,
                derive_seed(c.seed, "device-mc"),
            )?;
            let result = DeviceMcResult {
                charge_current: cell.pulse.charge_current,
                pulse_duration: cell.pulse.duration,
                relax_time: cell.relax_time,
                temperature: cell.magnet.temperature,
                bit_energy: cell.bit_energy()?,
                estimate: est.clone(),
            };
            let summary = format!(
                "P(1) = {:.4} ± {:.4} (3σ) over {} trials, {} extra relaxation windows\nenergy per bit {:.2} fJ\n",
                est.p_hat,
                est.confidence_halfwidth,
                est.trials,
                est.retries,
                result.bit_energy * 1e15
            );
            let (j, t) = out.write_report("device-mc", &Report::new("device-mc", &c, result), &summary)?;
            Ok(vec![j, t])
        }
        Command::Energy(a) => {
            c.validate()?;
            let result = match &a.checkpoint {
                Some(ck) => {
                    let hw = program(&c, ck)?;
                    let test_set = load_mnist(&c.data_dir(), Split::Test)?;
                    if a.image >= test_set.len() {
                        return Err(Error::InvalidArgument(format!("image {} out of range", a.image)));
                    }
                    let x = test_set.images.row(a.image).to_vec();
                    let mut sampler = hw.sampler(derive_seed(c.seed, "energy"), 0)?;
                    let ledger = inference_energy_report(&hw, &x, a.passes, &mut sampler, &c.energy)?;
                    EnergyResult {
                        mode: "metered".into(),
                        dims: hw.dims(),
                        per_pass_total: ledger.grand_total / a.passes as f64,
                        cmos_ratio: ledger.cmos_ratio(&c.energy),
                        ledger,
                    }
                }
                None => {
                    let counts = ScheduleCounts::for_dims(&c.network.dims, &c.sampling);
                    let mut scaled = counts.clone();
                    for v in [
                        &mut scaled.gaussian_samples,
                        &mut scaled.random_bits,
                        &mut scaled.accumulator_adds,
                        &mut scaled.dac_conversions,
                        &mut scaled.adc_conversions,
                        &mut scaled.column_reads,
                        &mut scaled.multiplies,
                        &mut scaled.neuron_resets,
                    ] {
                        *v *= a.passes;
                    }
                    let mut ledger = ledger_from_counts(&scaled, &c.energy, a.passes)?;
                    ledger.notes.push("crossbar joule term needs a programmed network; counted as zero".into());
                    EnergyResult {
                        mode: "counted".into(),
                        dims: c.network.dims.clone(),
                        per_pass_total: ledger.grand_total / a.passes as f64,
                        cmos_ratio: ledger.cmos_ratio(&c.energy),
                        ledger,
                    }
                }
            };
            let mut summary = result.ledger.to_table();
            summary += &format!("\nper pass {:.3} nJ ({} mode)\n", result.per_pass_total * 1e9, result.mode);
            if let Some(r) = result.cmos_ratio {
                summary += &format!("reference CMOS energy / per-pass energy = {r:.2}\n");
            }
            let (j, t) = out.write_report("energy", &Report::new("energy", &c, result), &summary)?;
            Ok(vec![j, t])
        }
        Command::Export(a) => {
            if let Some(v) = a.variation {
                c.evaluation.variation = v;
            }
            c.validate()?;
            let ck = checkpoint_path(&out, &a.ckpt.checkpoint)?;
            let mut hw = program(&c, &ck)?;
            if c.evaluation.variation > 0.0 {
                let mut rng = stream_rng(derive_seed(c.seed, "variation"), 0);
                hw = hw.with_variation(c.evaluation.variation, &mut rng)?;
            }
            let artifact = out.write_json("conductances.json", &hw.export())?;
            let mut summary = format!("{} layers, dims {:?}\n", hw.layers.len(), hw.dims());
            for (i, l) in hw.layers.iter().enumerate() {
                summary += &format!(
                    "layer {i}: w_max(mu) {:.5}  w_max(sigma) {:.5}  adc range mu {:.4} sigma {:.4}\n",
                    l.mu.w_max, l.sigma.w_max, l.mu_full_scale, l.sigma_full_scale
                );
            }
            let result = serde_json::json!({ "artifact": "conductances.json", "dims": hw.dims() });
            let (j, t) = out.write_report("export", &Report::new("export", &c, result), &summary)?;
            Ok(vec![artifact, j, t])
        }
    }
}
