//! Crossbar reads against integer and statistical oracles.

use ndarray::Array2;
use proptest::prelude::*;
use rand::Rng;

use spinbayes::crossbar::{
    apply_variation, column_read, drive_voltages, layer_forward_mean, layer_forward_sigma_traced,
    map_weights_to_conductance, ConverterSpec,
};
use spinbayes::magnetodynamics::{DwDeviceParams, TrngCell};
use spinbayes::rng::stream_rng;
use spinbayes::sampling::{ConfiguredSampler, GaussianSamplerConfig, IdealNormal, StandardSource};

fn cfg() -> ProptestConfig {
    ProptestConfig {
        cases: 64,
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

/// Signed ADC code computed from `Σ dac_code·level_code` in integers.
fn integer_oracle(x: &[f64], codes: &Array2<i32>, conv: &ConverterSpec, levels: u32, span: f64) -> Vec<i32> {
    let dac_max = (1i64 << conv.dac_bits.unwrap()) - 1;
    let adc_max = ((1i64 << (conv.adc_bits.unwrap() - 1)) - 1) as f64;
    let d: Vec<i64> = x.iter().map(|&v| (v * dac_max as f64).round() as i64).collect();
    let unit = conv.input_full_scale / dac_max as f64 * span / f64::from(levels - 1);
    (0..codes.ncols())
        .map(|j| {
            let acc: i64 = d.iter().zip(codes.column(j)).map(|(&a, &c)| a * i64::from(c)).sum();
            ((acc as f64 * unit / conv.output_full_scale).clamp(-1.0, 1.0) * adc_max).round() as i32
        })
        .collect()
}

proptest! {
    #![proptest_config(cfg())]

    #[test]
    fn analog_read_matches_integer_oracle(
        seed in any::<u64>(),
        rows in 1usize..24,
        cols in 1usize..24,
        bits in prop::sample::select(vec![2u32, 4, 5]),
        fs_frac in 0.05f64..1.0,
    ) {
        let device = DwDeviceParams::default();
        let levels = 1u32 << bits;
        let span = device.g_max() - device.g_min();
        let mut rng = stream_rng(seed, 0);
        let w = Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.2..1.2));
        let x: Vec<f64> = (0..rows).map(|_| rng.random_range(0.0..1.0)).collect();
        let conv = ConverterSpec {
            output_full_scale: fs_frac * rows as f64 * 0.1 * span,
            ..ConverterSpec::default()
        };
        let g = map_weights_to_conductance(&w, &device, Some(levels), 1.0, 0.1).unwrap();
        let expected = integer_oracle(&x, g.codes.as_ref().unwrap(), &conv, levels, span);
        let v = drive_voltages(&x, &conv);
        let mean = layer_forward_mean(&x, &g, &conv).unwrap();
        for j in 0..cols {
            let i = column_read(&v, &g.g_pos.column(j).to_vec(), &g.g_neg.column(j).to_vec()).unwrap();
            prop_assert!((i - mean[j]).abs() <= 1e-12 * i.abs().max(1e-9));
            prop_assert!((conv.adc_signed(i) - expected[j]).abs() <= 1);
        }
    }

    #[test]
    fn variation_keeps_sign_and_window(seed in any::<u64>(), frac in 0.0f64..0.5) {
        let device = DwDeviceParams::default();
        let mut rng = stream_rng(seed, 0);
        let w = Array2::from_shape_fn((12, 7), |_| rng.random_range(-1.0..1.0));
        let g = map_weights_to_conductance(&w, &device, Some(16), 1.0, 0.1).unwrap();
        let v = apply_variation(&g, frac, &mut rng).unwrap();
        prop_assert!(v.check_invariants().is_ok());
    }
}

#[test]
fn uniform_sigma_column_variance_is_k_s_squared() {
    let k = 64;
    let s = 0.3;
    let sigma = Array2::from_elem((k, 1), s);
    let device = DwDeviceParams::default();
    let g = map_weights_to_conductance(&sigma, &device, None, s, 0.1).unwrap();
    let conv = ConverterSpec::ideal(0.1, 1.0);
    let cfg = GaussianSamplerConfig::default();
    let z_fs = cfg.z_bound();
    let gain = g.full_scale_cell_current() / (s * z_fs);
    let x = vec![1.0; k];
    let mut sampler = ConfiguredSampler::new(&cfg, &TrngCell::default(), stream_rng(4, 0)).unwrap();
    let n = 10_000;
    let vals: Vec<f64> = (0..n)
        .map(|_| layer_forward_sigma_traced(&x, &g, &conv, z_fs, &mut sampler).unwrap().0[0] / gain)
        .collect();
    let mean = vals.iter().sum::<f64>() / n as f64;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let expected = k as f64 * s * s;
    assert!((var / expected - 1.0).abs() < 0.10, "{var} vs {expected}");
}

/// Replays the sampler stream that fed the read.
struct Recording<S> {
    inner: S,
    log: Vec<f64>,
}

impl<S: StandardSource> StandardSource for Recording<S> {
    fn next_standard(&mut self) -> spinbayes::Result<f64> {
        let z = self.inner.next_standard()?;
        self.log.push(z);
        Ok(z)
    }
}

#[test]
fn columns_consume_consecutive_disjoint_segments() {
    let (k, m) = (9, 5);
    let device = DwDeviceParams::default();
    let sigma = Array2::from_shape_fn((k, m), |(i, j)| 0.01 + 0.01 * ((i + j) % 4) as f64);
    let g = map_weights_to_conductance(&sigma, &device, None, 0.05, 0.1).unwrap();
    let conv = ConverterSpec::ideal(0.1, 1.0);
    let x: Vec<f64> = (0..k).map(|i| if i == 3 { 0.0 } else { 0.5 }).collect();
    let mut rec = Recording {
        inner: IdealNormal(stream_rng(8, 0)),
        log: Vec::new(),
    };
    let (_, trace) = layer_forward_sigma_traced(&x, &g, &conv, 3.0, &mut rec).unwrap();
    assert_eq!(rec.log.len(), k * m);
    for (j, z) in trace.iter().enumerate() {
        assert_eq!(z.as_slice(), &rec.log[j * k..(j + 1) * k]);
    }
}
