//! End-to-end runs of the `psfa` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use psfa::io::{read_dataset, read_matrix, write_matrix_csv};
use serde_json::Value;

fn psfa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_psfa"))
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = psfa(args);
    assert!(
        out.status.success(),
        "psfa {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn generate_small(dir: &Path, seed: &str) {
    ok(&[
        "generate", "--voxels", "60", "--timepoints", "8", "--subjects", "2", "--seed", seed,
        "--out", p(dir),
    ]);
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn fit_args<'a>(data: &'a str, out: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec![
        "fit", "--in", data, "--out", out, "--components", "4", "--max-iters", "40", "--restarts",
        "2", "--seed", "3", "--threads", "1",
    ];
    v.extend_from_slice(extra);
    v
}

#[test]
fn generate_defaults_match_benchmark() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["generate", "--out", p(dir.path())]);
    let ds = read_dataset(&dir.path().join("data.psfa")).unwrap();
    assert_eq!((ds.voxels(), ds.n_subjects(), ds.timepoints(0)), (1000, 3, 25));
    assert_eq!(read_matrix(&dir.path().join("a_true.psfm")).unwrap().shape(), (1000, 3));
    assert_eq!(read_matrix(&dir.path().join("noise_variance.psfm")).unwrap().shape(), (1000, 3));
    let echo = fs::read_to_string(dir.path().join("config.toml")).unwrap();
    assert!(echo.contains("command = \"generate\""));
}

#[test]
fn generate_is_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    generate_small(a.path(), "9");
    generate_small(b.path(), "9");
    for f in ["data.psfa", "a_true.psfm", "noise_variance.psfm", "s_true_b1.psfm"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap());
    }
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = psfa(&["generate", "--noise-mean", "0", "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(psfa(&["generate", "--bogus"]).status.code(), Some(1));
    assert_eq!(psfa(&["fit", "--in", "/nonexistent", "--out", p(dir.path())]).status.code(), Some(1));
    assert_eq!(psfa(&["--help"]).status.code(), Some(0));
}

#[test]
fn data_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.psfa");
    fs::write(&bad, b"PSFA\x01\x00\x00\x00short").unwrap();
    let out = psfa(&["fit", "--in", p(&bad), "--out", p(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("truncated"));
}

#[test]
fn fit_writes_outputs_and_report() {
    let dir = tempfile::tempdir().unwrap();
    generate_small(dir.path(), "1");
    let data = dir.path().join("data.psfa");
    let out = dir.path().join("fit");
    ok(&fit_args(p(&data), p(&out), &["--mean"]));
    for f in [
        "a_mean.psfm", "s_mean_b0.psfm", "s_mean_b1.psfm", "tau_shape.psfm", "tau_rate.psfm",
        "noise_variance.psfm", "mean_log_precision.psfm", "mu_mean.psfm", "config.toml",
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    assert_eq!(read_matrix(&out.join("a_mean.psfm")).unwrap().shape(), (60, 4));
    let report = json(&out.join("report.json"));
    assert_eq!(report["seeds"], serde_json::json!([3, 4]));
    assert_eq!(report["deterministic_reduction"], true);
    assert_eq!(report["threads"], 1);
    assert_eq!(report["fit"]["alpha_rate"], "corrected");
    assert_eq!(report["fit"]["mean_covariance"], "corrected");
    let trace: Vec<f64> = serde_json::from_value(report["fit"]["elbo_trace"].clone()).unwrap();
    assert!(trace.windows(2).all(|w| w[1] >= w[0] - 1e-8 * w[0].abs()));
    assert_eq!(report["fit"]["elbo_terms"].as_object().unwrap().len(), 13);
}

#[test]
fn pca_ignores_iteration_flags_with_warning() {
    let dir = tempfile::tempdir().unwrap();
    generate_small(dir.path(), "2");
    let out = dir.path().join("pca");
    let res = ok(&[
        "fit", "--model", "pca", "--components", "3", "--max-iters", "7", "--in",
        p(&dir.path().join("data.psfa")), "--out", p(&out),
    ]);
    assert!(String::from_utf8_lossy(&res.stderr).contains("--max-iters has no effect"));
    assert_eq!(read_matrix(&out.join("a_mean.psfm")).unwrap().shape(), (60, 3));
    let report = json(&out.join("report.json"));
    assert!(report["fit"].is_null());
    assert_eq!(report["pca"]["explained_variance_ratio"].as_array().unwrap().len(), 3);
}

#[test]
fn resume_continues_identically() {
    let dir = tempfile::tempdir().unwrap();
    generate_small(dir.path(), "4");
    let data = dir.path().join("data.psfa");
    let (full, part) = (dir.path().join("full"), dir.path().join("part"));
    ok(&fit_args(p(&data), p(&full), &[]));
    ok(&fit_args(p(&data), p(&part), &["--halt-after", "55", "--checkpoint-every", "10"]));
    let cp = part.join("checkpoint.psfc");
    assert!(cp.is_file());
    assert!(!part.join("a_mean.psfm").exists());
    ok(&fit_args(p(&data), p(&part), &["--resume", p(&cp), "--checkpoint-every", "10"]));
    for f in ["a_mean.psfm", "s_mean_b1.psfm", "tau_rate.psfm"] {
        assert_eq!(fs::read(full.join(f)).unwrap(), fs::read(part.join(f)).unwrap(), "{f}");
    }
    let (a, b) = (json(&full.join("report.json")), json(&part.join("report.json")));
    assert_eq!(a["fit"]["elbo_trace"], b["fit"]["elbo_trace"]);
    assert_eq!(a["fit"]["restarts"].as_array().unwrap().len(), 2);

    let other = psfa(&fit_args(p(&data), p(&part), &["--resume", p(&cp), "--seed", "8"]));
    assert_eq!(other.status.code(), Some(1));
}

#[test]
fn rerun_replays_report_echo() {
    let dir = tempfile::tempdir().unwrap();
    generate_small(dir.path(), "5");
    let out = dir.path().join("fit");
    ok(&fit_args(p(&dir.path().join("data.psfa")), p(&out), &[]));
    let first = fs::read(out.join("a_mean.psfm")).unwrap();
    let trace = json(&out.join("report.json"))["fit"]["elbo_trace"].clone();
    fs::remove_file(out.join("a_mean.psfm")).unwrap();
    ok(&["rerun", p(&out.join("report.json"))]);
    assert_eq!(fs::read(out.join("a_mean.psfm")).unwrap(), first);
    assert_eq!(json(&out.join("report.json"))["fit"]["elbo_trace"], trace);
    ok(&["rerun", p(&out.join("config.toml"))]);
    assert_eq!(fs::read(out.join("a_mean.psfm")).unwrap(), first);
}

#[test]
fn eval_against_external_csv() {
    let dir = tempfile::tempdir().unwrap();
    generate_small(dir.path(), "6");
    let truth = read_matrix(&dir.path().join("a_true.psfm")).unwrap();
    let csv = dir.path().join("external.csv");
    write_matrix_csv(&truth, &csv).unwrap();
    let report = dir.path().join("eval.json");
    ok(&[
        "eval", "--est", p(&dir.path().join("a_true.psfm")), "--ref", p(&csv), "--out",
        p(&report),
    ]);
    let r = json(&report);
    assert!((r["avg_abs_correlation"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert!(r["amari_index"].as_f64().unwrap() < 1e-10);
    assert_eq!(r["kurtosis"].as_array().unwrap().len(), 3);
    assert!(r["amari_definition"].as_str().unwrap().contains("1/(2D)"));

    let noise = dir.path().join("noise_variance.psfm");
    ok(&[
        "eval", "--est", p(&csv), "--ref", p(&csv), "--truth-noise", p(&noise), "--est-noise",
        p(&noise), "--out", p(&report),
    ]);
    assert!((json(&report)["noise_recovery"]["pearson"].as_f64().unwrap() - 1.0).abs() < 1e-12);

    let narrow = dir.path().join("narrow.csv");
    fs::write(&narrow, "1,2\n3,4\n").unwrap();
    let bad = psfa(&["eval", "--est", p(&narrow), "--ref", p(&csv), "--out", p(&report)]);
    assert_eq!(bad.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&bad.stderr);
    assert!(msg.contains("2x2") && msg.contains("60x3"), "{msg}");
    let ragged = dir.path().join("ragged.csv");
    fs::write(&ragged, "1,2\n3\n").unwrap();
    let bad = psfa(&["eval", "--est", p(&ragged), "--ref", p(&csv), "--out", p(&report)]);
    assert_eq!(bad.status.code(), Some(2));
}
