use std::path::{Path, PathBuf};
use std::process::Command;

use qrcal::datasets::synth_hetero;
use qrcal::metrics::{calibration_error, MetricConfig};
use qrcal::recalib::recalibrated_pits;
use qrcal::CalibrationMap;
use qrcal_cli::commands::{cmd_recalibrate, cmd_report, cmd_sweep, cmd_train};
use qrcal_cli::output::{read_rows, summarize, write_rows, MetricRow, METRICS_CSV};
use qrcal_cli::report::{metric_tables, render_text};
use qrcal_cli::ExperimentConfig;

const TINY: &str = r#"
mc_passes = 3

[dataset]
name = "synth_hetero"
n = 150

[train]
epochs = 3
hidden = 8
batch_size = 32

[splits]
n_splits = 2
"#;

fn tiny(out: &Path) -> ExperimentConfig {
    let mut c = ExperimentConfig::from_toml_str(TINY).unwrap();
    c.out_dir = out.to_path_buf();
    c
}

fn qrcal(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_qrcal"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("exp.toml");
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn train_then_report_through_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out = dir.path().join("res");
    let (code, stdout, stderr) = qrcal(&["train", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{stderr}");
    assert!(stdout.contains("calibration error") && stdout.contains("lambda=20"), "{stdout}");
    for f in ["metrics.csv", "summary.csv", "reliability.csv", "models/synth_hetero_mc_dropout_lam20_split1.bin"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let (code, stdout, _) = qrcal(&["report", out.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(stdout.contains("**"));
    assert!(out.join("report.csv").exists());
}

#[test]
fn missing_dataset_exits_2_with_path() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, stderr) = qrcal(&[
        "train",
        "--dataset",
        "/no/such/dir/housing.csv",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code, 2);
    assert!(stderr.contains("/no/such/dir/housing.csv"), "{stderr}");
}

#[test]
fn usage_and_config_errors_exit_2() {
    assert_eq!(qrcal(&["frobnicate"]).0, 2);
    assert_eq!(qrcal(&["train", "--lambda", "abc"]).0, 2);
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[dataset]\nname = \"synth_hetero\"\n[train]\nepochs = -3\n");
    let (code, _, stderr) = qrcal(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(stderr.contains("line 4"), "{stderr}");
}

#[test]
fn runtime_failures_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let (code, _, stderr) = qrcal(&["recalibrate", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(stderr.contains("not found"), "{stderr}");
    let empty = dir.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    assert_eq!(qrcal(&["report", empty.to_str().unwrap()]).0, 1);
}

#[test]
fn identical_configs_give_identical_bytes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    cmd_train(&tiny(a.path()), &[0.0, 20.0]).unwrap();
    cmd_train(&tiny(b.path()), &[0.0, 20.0]).unwrap();
    for f in ["metrics.csv", "summary.csv", "reliability.csv"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn single_lambda_sweep_equals_train() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    cmd_train(&tiny(a.path()), &[20.0]).unwrap();
    let mut cfg = tiny(b.path());
    cfg.lambdas = vec![20.0];
    let sweep = cmd_sweep(&cfg).unwrap();
    assert!(sweep.spearman.is_nan());
    assert_eq!(
        std::fs::read(a.path().join(METRICS_CSV)).unwrap(),
        std::fs::read(b.path().join(METRICS_CSV)).unwrap()
    );
    assert!(b.path().join("curve.csv").exists());
}

#[test]
fn recalibration_rows_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path());
    let trained = cmd_train(&cfg, &[0.0, 20.0]).unwrap();
    let rows = cmd_recalibrate(&cfg, &[0.0, 20.0]).unwrap();
    assert_eq!(rows.len(), 4);
    for (r, m) in rows.iter().zip(&trained.rows) {
        assert_eq!((r.lambda, r.split), (m.lambda, m.split));
        assert_eq!(r.calib_error, m.calib_error);
        assert_eq!(r.worse == "*", r.calib_error_iso > r.calib_error);
    }
    let text = cmd_report(dir.path()).unwrap();
    assert!(text.contains("lambda=20+iso"), "{text}");
}

#[test]
fn recalibrating_with_a_different_feature_count_fails() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("toy.csv");
    let rows: String = (0..60).map(|i| format!("{},{}\n", i as f64 / 10.0, (i * 7 % 11) as f64)).collect();
    std::fs::write(&csv, format!("x,y\n{rows}")).unwrap();
    let mut cfg = tiny(&dir.path().join("out"));
    cfg.dataset.name = None;
    cfg.dataset.path = Some(csv.clone());
    cmd_train(&cfg, &[0.0]).unwrap();
    let rows: String = (0..60).map(|i| format!("{},{},{}\n", i as f64 / 10.0, i % 3, (i * 7 % 11) as f64)).collect();
    std::fs::write(&csv, format!("x,z,y\n{rows}")).unwrap();
    let err = cmd_recalibrate(&cfg, &[0.0]).unwrap_err();
    assert!(err.to_string().contains("expects 1 features"), "{err}");
}

#[test]
fn identity_map_leaves_metrics_unchanged() {
    let s = synth_hetero(500, 9);
    let preds: Vec<_> = s
        .true_predictions()
        .iter()
        .map(|g| qrcal::GaussianPrediction { mu: g.mu, sigma: 1.5 * g.sigma })
        .collect();
    let ys = s.data.targets();
    let raw: Vec<f64> = qrcal::gaussian::pits(&preds, ys).unwrap().iter().map(|p| p.value()).collect();
    let mapped: Vec<f64> = recalibrated_pits(&CalibrationMap::identity(), &preds, ys)
        .unwrap()
        .iter()
        .map(|p| p.value())
        .collect();
    assert_eq!(raw, mapped);
    let cfg = MetricConfig::default();
    assert_eq!(calibration_error(&raw, &cfg).unwrap(), calibration_error(&mapped, &cfg).unwrap());
}

fn row(lambda: f64, split: usize, calib_error: f64) -> MetricRow {
    MetricRow {
        dataset: "d".into(),
        model: "mc_dropout".into(),
        lambda,
        split,
        calib_error,
        rmse: 1.0 + split as f64,
        nll: 0.5,
        n: 100,
    }
}

#[test]
fn five_split_aggregation_matches_hand_computation() {
    let ce = [44.0, 41.5, 50.25, 39.0, 47.75];
    let rows: Vec<MetricRow> = ce.iter().enumerate().map(|(k, &c)| row(0.0, k, c)).collect();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.csv");
    write_rows(&p, &rows).unwrap();
    let back: Vec<MetricRow> = read_rows(&p).unwrap();
    let s = &summarize(&back)[0];
    // sum 222.5; squared deviations 0.25 + 9 + 33.0625 + 30.25 + 10.5625 = 83.125
    let mean = 222.5 / 5.0;
    let std = (83.125f64 / 5.0).sqrt();
    assert!((s.calib_error_mean - mean).abs() < 1e-12);
    assert!((s.calib_error_std - std).abs() < 1e-12);
    assert!((s.rmse_mean - 3.0).abs() < 1e-12);
    assert!((s.rmse_std - 2f64.sqrt()).abs() < 1e-12);
    assert_eq!(s.splits, 5);
}

#[test]
fn report_bolds_the_lower_column_and_both_on_ties() {
    let rows = vec![row(0.0, 0, 44.99), row(20.0, 0, 42.59)];
    let text = render_text(&metric_tables(&rows)[..1]);
    assert!(text.contains("**42.5900 ± 0.0000**") && !text.contains("**44.9900"), "{text}");
    let rows = vec![row(0.0, 0, 3.0), row(20.0, 0, 3.0 + 1e-10)];
    let text = render_text(&metric_tables(&rows)[..1]);
    assert_eq!(text.matches("**").count(), 4, "{text}");
}

#[test]
fn report_on_empty_directory_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(cmd_report(dir.path()).is_err());
    write_rows::<MetricRow>(&dir.path().join(METRICS_CSV), &[]).unwrap();
    assert!(cmd_report(dir.path()).is_err());
}
