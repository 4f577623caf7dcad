//! The `spinbayes` binary end to end on a synthetic IDX dataset.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn spinbayes(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spinbayes"))
        .args(args)
        .env_remove("SPINBAYES_MNIST_DIR")
        .output()
        .expect("binary runs")
}

fn report(dir: &Path, stem: &str) -> Value {
    let text = fs::read_to_string(dir.join(format!("{stem}.json"))).unwrap();
    serde_json::from_str(&text).unwrap()
}

/// Writes an IDX pair where class `c` lights up row band `c` of the image.
fn write_split(dir: &Path, prefix: &str, n: usize) {
    let mut images = Vec::with_capacity(16 + n * 784);
    images.extend_from_slice(&2051u32.to_be_bytes());
    for d in [n as u32, 28, 28] {
        images.extend_from_slice(&d.to_be_bytes());
    }
    let mut labels = Vec::with_capacity(8 + n);
    labels.extend_from_slice(&2049u32.to_be_bytes());
    labels.extend_from_slice(&(n as u32).to_be_bytes());
    for i in 0..n {
        let class = i % 10;
        labels.push(class as u8);
        for r in 0..28 {
            for c in 0..28 {
                let on = r / 3 == class && (c + i) % 5 != 0;
                images.push(if on { 230 } else { ((r * 7 + c * 3 + i) % 11) as u8 });
            }
        }
    }
    fs::write(dir.join(format!("{prefix}-images-idx3-ubyte")), images).unwrap();
    fs::write(dir.join(format!("{prefix}-labels-idx1-ubyte")), labels).unwrap();
}

fn small_config(dir: &Path) -> String {
    let path = dir.join("small.toml");
    fs::write(
        &path,
        "seed = 11\n\
         [network]\ndims = [784, 24, 10]\n\
         [training]\nepochs = 3\nbatch_size = 20\nlearning_rate = 0.01\ntrain_eval_subset = 100\ncalibration_samples = 100\n\
         [evaluation]\nsamples = 4\nmc_runs = 2\n\
         [crossbar]\ncalibration_inputs = 100\n",
    )
    .unwrap();
    path.display().to_string()
}

#[test]
fn usage_errors_exit_nonzero_without_artifacts() {
    let out = spinbayes(&[]);
    assert_eq!(out.status.code(), Some(2));
    let out = spinbayes(&["hw-eval", "--variation", "lots"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
}

#[test]
fn runtime_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("out");
    let o = out_dir.to_str().unwrap();
    let missing = tmp.path().join("nope.json");
    let out = spinbayes(&["--out", o, "eval", "--checkpoint", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.json"));

    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "[training]\nepoch = 3\n").unwrap();
    let out = spinbayes(&["--config", bad.to_str().unwrap(), "--out", o, "energy"]);
    assert_eq!(out.status.code(), Some(1));

    let out = spinbayes(&["--out", o, "--data-dir", tmp.path().to_str().unwrap(), "train"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out_dir.join("checkpoint.json").exists());
}

#[test]
fn device_rng_and_energy_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let o = tmp.path().to_str().unwrap();

    let out = spinbayes(&["--out", o, "device-mc", "--trials", "200"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(tmp.path(), "device-mc");
    assert_eq!(r["command"], "device-mc");
    let p = r["result"]["estimate"]["p_hat"].as_f64().unwrap();
    assert!((0.3..0.7).contains(&p), "{p}");
    assert!((r["result"]["bit_energy"].as_f64().unwrap() - 57e-15).abs() < 0.1e-15);

    let out = spinbayes(&["--out", o, "rng-test", "--count", "20000"]);
    assert!(out.status.success());
    let r = report(tmp.path(), "rng-test");
    assert_eq!(r["result"]["ks_irwin_hall"]["pass"], true);
    assert!(r["result"]["moments"]["mean"].as_f64().unwrap().abs() < 0.03);

    let out = spinbayes(&["--out", o, "energy", "--passes", "3"]);
    assert!(out.status.success());
    let r = report(tmp.path(), "energy");
    let l = &r["result"]["ledger"];
    let (rng, xbar, total) = (
        l["rng_total"].as_f64().unwrap(),
        l["crossbar_total"].as_f64().unwrap(),
        l["grand_total"].as_f64().unwrap(),
    );
    assert_eq!(total, rng + xbar);
    let per_pass = r["result"]["per_pass_total"].as_f64().unwrap();
    assert!((per_pass - total / 3.0).abs() < 1e-18);
    assert!(fs::read_to_string(tmp.path().join("energy.txt")).unwrap().contains("grand total"));
}

#[test]
fn train_evaluate_and_export_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("idx");
    fs::create_dir(&data).unwrap();
    write_split(&data, "train", 300);
    write_split(&data, "t10k", 100);
    let cfg = small_config(tmp.path());
    let out_dir = tmp.path().join("run");
    let common = ["--config", cfg.as_str(), "--out", out_dir.to_str().unwrap(), "--data-dir", data.to_str().unwrap()];
    let run = |extra: &[&str]| {
        let args: Vec<&str> = common.iter().copied().chain(extra.iter().copied()).collect();
        let out = spinbayes(&args);
        assert!(out.status.success(), "{extra:?}: {}", String::from_utf8_lossy(&out.stderr));
    };

    run(&["train"]);
    let t = report(&out_dir, "train");
    assert_eq!(t["seed"], 11);
    assert_eq!(t["config"]["network"]["dims"], serde_json::json!([784, 24, 10]));
    assert_eq!(t["result"]["log"]["epochs"].as_array().unwrap().len(), 3);
    let first = fs::read(out_dir.join("checkpoint.json")).unwrap();

    run(&["eval"]);
    let sw = report(&out_dir, "eval")["result"]["accuracy"].as_f64().unwrap();
    assert!(sw > 0.9, "{sw}");

    run(&["hw-eval", "--variation", "0.1"]);
    let hw = report(&out_dir, "hw-eval");
    assert!(hw["result"]["quantized_accuracy"].as_f64().unwrap() > 0.8);
    assert_eq!(hw["result"]["variation_accuracies"].as_array().unwrap().len(), 2);

    run(&["export"]);
    let e: Value = serde_json::from_str(&fs::read_to_string(out_dir.join("conductances.json")).unwrap()).unwrap();
    assert_eq!(e["format"], "spinbayes-conductances/1");
    assert_eq!(e["layers"].as_array().unwrap().len(), 2);

    run(&["energy", "--checkpoint", out_dir.join("checkpoint.json").to_str().unwrap()]);
    assert_eq!(report(&out_dir, "energy")["result"]["mode"], "metered");

    // same seed, same bytes
    run(&["train"]);
    assert_eq!(first, fs::read(out_dir.join("checkpoint.json")).unwrap());
}
