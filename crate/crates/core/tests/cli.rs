use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use witten_sampler::experiments::WORKERS_ENV;
use witten_sampler::{ExperimentKind, Manifest};

const BIN: &str = env!("CARGO_BIN_EXE_witten-sampler");

fn write_config(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

fn cli(args: &[&str], workers: Option<&str>) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args).env("RUST_LOG", "warn");
    if let Some(w) = workers {
        cmd.env(WORKERS_ENV, w);
    }
    cmd.output().unwrap()
}

fn ok(o: &Output) {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
}

const WARMSTART: &str = r#"{
  "experiment": "lindblad-warmstart",
  "potential": {"key": "quartic-cosine-1d"},
  "grid": {"n": 16, "half_width": 2.5},
  "betas": [2.0, 4.0],
  "lindblad": {"dt": 1e-3, "t_final": 0.05, "observe_every": 10, "center": [-1.7], "std": 0.1},
  "output": "unused"
}"#;

const MALA: &str = r#"{
  "experiment": "sample",
  "potential": {"key": "quartic-cosine-1d"},
  "grid": {"n": 32, "half_width": 2.5},
  "betas": [1.0, 2.0, 3.0],
  "sampler": {"source": "mala", "dt": 0.05, "n_steps": 5000, "chains": 3, "x0": [0.2], "write_samples": true},
  "seed": 4,
  "output": "unused"
}"#;

fn read_outputs(dir: &Path, m: &Manifest) -> Vec<(String, Vec<u8>)> {
    m.outputs.iter().map(|f| (f.clone(), fs::read(dir.join(f)).unwrap())).collect()
}

#[test]
fn run_writes_manifest_and_listed_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "w.json", WARMSTART);
    let out = tmp.path().join("out");
    let o = cli(&["lindblad-warmstart", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], None);
    ok(&o);
    let m = Manifest::load(&out.join("manifest.json")).unwrap();
    assert_eq!(m.experiment, ExperimentKind::LindbladWarmstart);
    assert!(m.version.starts_with("v0.1.0"));
    assert_eq!(m.config.betas, vec![2.0, 4.0]);
    assert_eq!(m.config.output, out);
    assert!(!m.outputs.is_empty());
    for f in &m.outputs {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    assert_eq!(m.summary["final_overlaps"].as_array().unwrap().len(), 2);
    // the stored config is itself a valid config
    let again = witten_sampler::ExperimentConfig::from_json(&serde_json::to_string(&m.config).unwrap()).unwrap();
    assert_eq!(again.betas, m.config.betas);
}

#[test]
fn checkpoints_resume_to_identical_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "w.json", WARMSTART);
    let out = tmp.path().join("out");
    let args = ["lindblad-warmstart", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    ok(&cli(&args, None));
    let m = Manifest::load(&out.join("manifest.json")).unwrap();
    let first = read_outputs(&out, &m);
    let checkpoints: Vec<_> = fs::read_dir(out.join("checkpoints")).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(checkpoints.len(), 2, "{checkpoints:?}");

    // drop one checkpoint and every output; the rerun recomputes only that beta
    fs::remove_file(out.join("checkpoints").join(&checkpoints[0])).unwrap();
    for (f, _) in &first {
        fs::remove_file(out.join(f)).unwrap();
    }
    ok(&cli(&args, None));
    assert_eq!(read_outputs(&out, &m), first);

    // a different grid must not pick up the stale checkpoints
    let other = write_config(tmp.path(), "w2.json", &WARMSTART.replace("\"n\": 16", "\"n\": 20"));
    ok(&cli(&["lindblad-warmstart", "--config", other.to_str().unwrap(), "--out", out.to_str().unwrap()], None));
    let m2 = Manifest::load(&out.join("manifest.json")).unwrap();
    assert_ne!(read_outputs(&out, &m2), first);
}

#[test]
fn reruns_are_bit_exact_across_worker_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "s.json", MALA);
    let mut runs = Vec::new();
    for (i, workers) in ["1", "3"].iter().enumerate() {
        let out = tmp.path().join(format!("out{i}"));
        ok(&cli(&["sample", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], Some(workers)));
        let m = Manifest::load(&out.join("manifest.json")).unwrap();
        runs.push(read_outputs(&out, &m));
    }
    assert_eq!(runs[0], runs[1]);
    assert!(runs[0].iter().any(|(f, _)| f.contains("samples")), "{:?}", runs[0].iter().map(|r| &r.0).collect::<Vec<_>>());
}

#[test]
fn overrides_apply() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "s.json", MALA);
    let out = tmp.path().join("out");
    ok(&cli(
        &["sample", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--beta", "1.5,2.5", "--seed", "9"],
        None,
    ));
    let m = Manifest::load(&out.join("manifest.json")).unwrap();
    assert_eq!(m.config.betas, vec![1.5, 2.5]);
    assert_eq!(m.config.seed, 9);
}

#[test]
fn bad_input_fails_with_a_named_field() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = write_config(tmp.path(), "bad.json", &MALA.replace("\"dt\": 0.05", "\"dt\": -1.0"));
    let out = tmp.path().join("out");
    let o = cli(&["sample", "--config", bad.to_str().unwrap(), "--out", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("dt"), "{err}");

    let cfg = write_config(tmp.path(), "s.json", MALA);
    let o = cli(&["gap-scan", "--config", cfg.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("experiment"));

    let o = cli(&["no-such-thing", "--config", cfg.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(1));
}
