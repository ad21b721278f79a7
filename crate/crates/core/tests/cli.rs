use std::path::Path;
use std::process::{Command, Output};

fn covpred(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_covpred"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn usage_errors_exit_with_code_2() {
    assert_eq!(covpred(&[]).status.code(), Some(2));
    assert_eq!(covpred(&["no-such-command"]).status.code(), Some(2));
    let out = covpred(&[
        "train",
        "--bs-file",
        "a.csv",
        "--measurements",
        "b.csv",
        "--variant",
        "wrong4",
        "--rate",
        "0.5",
        "--model-out",
        "m.json",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("wrong4"));
}

#[test]
fn missing_input_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = covpred(&[
        "inspect-model",
        "--model",
        p(&dir.path().join("absent.json")),
    ]);
    assert_eq!(out.status.code(), Some(5));
}

#[test]
fn bad_rate_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(covpred(&[
        "synth",
        "--n-bs",
        "4",
        "--samples-per-bs",
        "10",
        "--out",
        p(d)
    ])
    .status
    .success());
    let out = covpred(&[
        "train",
        "--bs-file",
        p(&d.join("bs.csv")),
        "--measurements",
        p(&d.join("measurements.csv")),
        "--variant",
        "proposed",
        "--rate",
        "1.5",
        "--model-out",
        p(&d.join("m.json")),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn synth_train_map_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let synth = covpred(&[
        "synth",
        "--n-bs",
        "6",
        "--samples-per-bs",
        "40",
        "--seed",
        "3",
        "--out",
        p(d),
    ]);
    assert!(
        synth.status.success(),
        "{}",
        String::from_utf8_lossy(&synth.stderr)
    );
    for f in ["bs.csv", "measurements.csv", "scenario.toml"] {
        assert!(d.join(f).is_file(), "{f} missing");
    }

    let model = d.join("model.json");
    let report = d.join("report.json");
    let train = covpred(&[
        "train",
        "--bs-file",
        p(&d.join("bs.csv")),
        "--measurements",
        p(&d.join("measurements.csv")),
        "--variant",
        "proposed",
        "--rate",
        "0.5",
        "--hidden-width",
        "8",
        "--subnet-layers",
        "2",
        "--max-epochs",
        "5",
        "--batch-size",
        "32",
        "--model-out",
        p(&model),
        "--report-out",
        p(&report),
    ]);
    assert!(
        train.status.success(),
        "{}",
        String::from_utf8_lossy(&train.stderr)
    );
    let rep: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert!(rep.is_object());

    let inspect = covpred(&["inspect-model", "--model", p(&model)]);
    assert!(inspect.status.success());
    let summary: serde_json::Value = serde_json::from_slice(&inspect.stdout).unwrap();
    assert!(summary.is_object());

    let (csv, meta, ppm) = (d.join("map.csv"), d.join("map.toml"), d.join("map.ppm"));
    let map = covpred(&[
        "predict-map",
        "--model",
        p(&model),
        "--bs-file",
        p(&d.join("bs.csv")),
        "--radius",
        "300",
        "--resolution",
        "50",
        "--out-csv",
        p(&csv),
        "--out-meta",
        p(&meta),
        "--out-ppm",
        p(&ppm),
    ]);
    assert!(
        map.status.success(),
        "{}",
        String::from_utf8_lossy(&map.stderr)
    );
    assert!(std::fs::read(&ppm).unwrap().starts_with(b"P6"));

    // sampling the map at its own cell centers returns the stored values
    let sampled = d.join("sampled.csv");
    let sample = covpred(&[
        "sample-map",
        "--map-csv",
        p(&csv),
        "--map-meta",
        p(&meta),
        "--points",
        p(&csv),
        "--out",
        p(&sampled),
    ]);
    assert!(
        sample.status.success(),
        "{}",
        String::from_utf8_lossy(&sample.stderr)
    );
    let mut map_rows = csv::Reader::from_path(&csv).unwrap();
    let mut got_rows = csv::Reader::from_path(&sampled).unwrap();
    let (a, b): (Vec<_>, Vec<_>) = (
        map_rows.records().map(|r| r.unwrap()).collect(),
        got_rows.records().map(|r| r.unwrap()).collect(),
    );
    assert_eq!(a.len(), b.len());
    assert!(
        a.iter().any(|r| !r[2].is_empty()),
        "map has no covered cells"
    );
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(&x[2], &y[2]);
    }
}
