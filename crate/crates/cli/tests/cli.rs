use std::path::Path;
use std::process::{Command, Output};

fn sep_lab(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sep-lab"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn manifest(dir: &Path, name: &str) -> serde_json::Value {
    let text = std::fs::read_to_string(dir.join(format!("{name}.manifest.json"))).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn selftest_is_green() {
    let dir = tempfile::tempdir().unwrap();
    let o = sep_lab(dir.path(), &["selftest"]);
    assert!(o.status.success(), "{}\n{}", stdout(&o), String::from_utf8_lossy(&o.stderr));
    assert!(!stdout(&o).contains("FAIL"));
    let csv = std::fs::read_to_string(dir.path().join("selftest.csv")).unwrap();
    assert!(csv.starts_with("module,op,inputs,deviation,tolerance,status\n"));
}

#[test]
fn selftest_catches_modular_commutator_mutation() {
    let dir = tempfile::tempdir().unwrap();
    let o = sep_lab(dir.path(), &["selftest", "--mutate-modcomm", "1.001"]);
    assert_eq!(o.status.code(), Some(1));
    let fails: Vec<String> = stdout(&o).lines().filter(|l| l.starts_with("FAIL")).map(String::from).collect();
    assert_eq!(fails.len(), 1, "{fails:?}");
    assert!(fails[0].contains("gaussian / modular commutator vs dense"));
    // the manifest is still written
    assert_eq!(manifest(dir.path(), "selftest")["subcommand"], "selftest");
}

#[test]
fn config_errors_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.toml");
    let o = sep_lab(dir.path(), &["--config", missing.to_str().unwrap(), "selftest"]);
    assert_eq!(o.status.code(), Some(2));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[mc]\nsample = 3\n").unwrap();
    let o = sep_lab(dir.path(), &["--config", bad.to_str().unwrap(), "rbim", "corr", "--p", "0.1", "--L", "4", "--r", "1"]);
    assert_eq!(o.status.code(), Some(2));

    let o = sep_lab(dir.path(), &["rbim", "scan", "--grid", "0.1:0.2", "--L", "4,8"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn gibbs_verify_reports_pass() {
    let dir = tempfile::tempdir().unwrap();
    let o = sep_lab(dir.path(), &["gibbs", "verify", "--model", "cluster1d_4", "--p", "0.3"]);
    assert!(o.status.success());
    let line = stdout(&o);
    assert!(line.starts_with("PASS maxdev "), "{line}");
    let dev: f64 = line.trim().trim_start_matches("PASS maxdev ").parse().unwrap();
    assert!(dev < 1e-10);
    let csv = std::fs::read_to_string(dir.path().join("gibbs_verify.csv")).unwrap();
    // 8 terms plus header
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 9);
}

#[test]
fn exported_model_file_verifies() {
    let dir = tempfile::tempdir().unwrap();
    assert!(sep_lab(dir.path(), &["gibbs", "export", "--model", "kitaev_3"]).status.success());
    let file = dir.path().join("kitaev_3.model");
    let o = sep_lab(dir.path(), &["gibbs", "verify", "--model", file.to_str().unwrap(), "--p", "0.15"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let broken = dir.path().join("broken.model");
    std::fs::write(&broken, "qubits 2\nterm X0 X1 | flip Z0\nterm Z0 | flip X0\n").unwrap();
    let o = sep_lab(dir.path(), &["gibbs", "verify", "--model", broken.to_str().unwrap(), "--p", "0.15"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn deterministic_outputs_are_bit_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let args = ["--seed", "9", "pwave", "modcomm", "--L", "8", "--p", "0.05", "--m", "random,staggered"];
    assert!(sep_lab(a.path(), &args).status.success());
    assert!(sep_lab(b.path(), &args).status.success());
    let read = |d: &Path| std::fs::read(d.join("pwave_modcomm.csv")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
}

#[test]
fn monte_carlo_is_independent_of_worker_count() {
    let run = |workers: &str| {
        let dir = tempfile::tempdir().unwrap();
        let o = Command::new(env!("CARGO_BIN_EXE_sep-lab"))
            .env("SEPLAB_WORKERS", workers)
            .args(["--seed", "4", "rbim", "corr", "--p", "0.1", "--L", "4", "--r", "1,2", "--samples", "6", "--sweeps", "50"])
            .arg("--out")
            .arg(dir.path())
            .output()
            .unwrap();
        assert!(o.status.success());
        let m = manifest(dir.path(), "rbim-corr");
        assert_eq!(m["workers"].as_u64().unwrap().to_string(), workers);
        std::fs::read(dir.path().join("rbim_corr.csv")).unwrap()
    };
    assert_eq!(run("1"), run("3"));
}

#[test]
fn manifest_records_seeds_config_and_digests() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "seed = 12\n[mc]\nsamples = 4\nsweeps = 40\n").unwrap();
    let o = sep_lab(dir.path(), &["--config", cfg.to_str().unwrap(), "rbim", "corr", "--p", "0.05", "--L", "4", "--r", "2"]);
    assert!(o.status.success());
    let m = manifest(dir.path(), "rbim-corr");
    assert_eq!(m["master_seed"], 12);
    assert_eq!(m["derived_seeds"][0]["stream"], 0);
    let snapshot = m["config"].as_str().unwrap();
    assert!(snapshot.contains("seed = 12") && snapshot.contains("samples = 4"));
    let csv = std::fs::read_to_string(dir.path().join("rbim_corr.csv")).unwrap();
    assert!(csv.contains("\n# samples: 4\n") || csv.starts_with("# samples: 4\n"));
    let digest = &m["outputs"][0];
    assert_eq!(digest["file"], "rbim_corr.csv");
    assert_eq!(digest["sha256"].as_str().unwrap().len(), 64);
    // command-line seed overrides the file
    let o = sep_lab(dir.path(), &["--config", cfg.to_str().unwrap(), "--seed", "13", "rbim", "corr", "--p", "0.05", "--L", "4", "--r", "2"]);
    assert!(o.status.success());
    assert_eq!(manifest(dir.path(), "rbim-corr")["master_seed"], 13);
}

#[test]
fn strict_promotes_flagged_estimates() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["rbim", "corr", "--p", "0.1", "--L", "8", "--r", "4", "--samples", "4", "--sweeps", "5"];
    assert!(sep_lab(dir.path(), &args).status.success());
    let mut strict = vec!["--strict"];
    strict.extend(args);
    assert_eq!(sep_lab(dir.path(), &strict).status.code(), Some(1));
}
