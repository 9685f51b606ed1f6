use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gapscreen::dataio::{lambda_max, write_libsvm};
use gapscreen::runner::parse_coefficients;
use gapscreen::screening::scaled_finite_gap;
use gapscreen::synthetic::lasso_problem;
use gapscreen::{GroupRegularizer, LossKind, LossModel};
use tempfile::TempDir;

fn gapscreen(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gapscreen"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_data(dir: &Path, m: usize, n: usize, seed: u64) -> PathBuf {
    let (data, _) = lasso_problem(m, n, 4, 0.01, seed);
    let path = dir.join("data.txt");
    write_libsvm(&data, fs::File::create(&path).unwrap()).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_writes_metrics_and_model() {
    let tmp = TempDir::new().unwrap();
    let data = write_data(tmp.path(), 30, 40, 1);
    let out = tmp.path().join("r1");
    let res = gapscreen(&[
        "run",
        "--data",
        s(&data),
        "--loss",
        "squared",
        "--reg",
        "l1",
        "--lambda-ratio",
        "2",
        "--algo",
        "os-proxsgd",
        "--w",
        "0.51",
        "--T-factor",
        "4",
        "--epochs",
        "12",
        "--seed",
        "7",
        "--out",
        s(&out),
    ]);
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let csv = fs::read_to_string(out.join("metrics.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("algo,epoch,active,elapsed_s,error,online_gap")
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 3);
    for row in &rows {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols.len(), 6);
        assert_eq!(cols[0], "os-proxsgd");
        assert_eq!(cols[4], "");
        assert!(!cols[5].is_empty());
    }
    let model = parse_coefficients(&fs::read_to_string(out.join("model.txt")).unwrap()).unwrap();
    assert_eq!(model.len(), 40);
}

#[test]
fn missing_data_is_a_usage_error() {
    let res = gapscreen(&["run", "--out", "x"]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("Usage"));
}

#[test]
fn lambda_ratio_below_one_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let data = write_data(tmp.path(), 10, 10, 2);
    for cmd in ["run", "solve-ref"] {
        let res = gapscreen(&[
            cmd,
            "--data",
            s(&data),
            "--lambda-ratio",
            "0.5",
            "--out",
            s(tmp.path()),
        ]);
        assert_eq!(res.status.code(), Some(2), "{cmd}");
        assert!(String::from_utf8_lossy(&res.stderr).contains("lambda ratio"));
    }
}

#[test]
fn bad_data_file_fails_with_line_number() {
    let tmp = TempDir::new().unwrap();
    let path = tmp.path().join("bad.txt");
    fs::write(&path, "1 1:0.5\n2 x:1\n").unwrap();
    let res = gapscreen(&["run", "--data", s(&path), "--out", s(tmp.path())]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("line 2"));
}

fn compare(data: &Path, out: &Path, extra: &[&str]) -> String {
    let mut args = vec![
        "compare",
        "--data",
        s(data),
        "--epochs",
        "8",
        "--seed",
        "3",
        "--no-timing",
        "--out",
        s(out),
    ];
    args.extend_from_slice(extra);
    let res = gapscreen(&args);
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    fs::read_to_string(out.join("metrics.csv")).unwrap()
}

#[test]
fn compare_covers_three_algorithms_and_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let data = write_data(tmp.path(), 25, 30, 4);
    let a = compare(&data, &tmp.path().join("a"), &[]);
    let b = compare(&data, &tmp.path().join("b"), &[]);
    assert_eq!(a, b);
    let algos: Vec<&str> = a
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    for name in ["fs-proxsgd", "os-proxsgd", "proxsgd"] {
        assert!(algos.contains(&name));
    }
    let mut sorted = algos.clone();
    sorted.sort();
    assert_eq!(algos, sorted);
    assert!(a.lines().skip(1).all(|l| l.split(',').nth(4) == Some("")));
}

#[test]
fn reference_file_fills_error_column() {
    let tmp = TempDir::new().unwrap();
    let data = write_data(tmp.path(), 25, 30, 5);
    let res = gapscreen(&[
        "solve-ref",
        "--data",
        s(&data),
        "--tol",
        "1e-9",
        "--out",
        s(tmp.path()),
    ]);
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let reference = tmp.path().join("ref.txt");
    let csv = compare(&data, &tmp.path().join("c"), &["--ref", s(&reference)]);
    for line in csv.lines().skip(1) {
        let err: f64 = line.split(',').nth(4).unwrap().parse().unwrap();
        assert!(err.is_finite() && err >= 0.0);
    }
}

#[test]
fn reference_at_lambda_max_is_zero() {
    let tmp = TempDir::new().unwrap();
    let data = write_data(tmp.path(), 20, 15, 6);
    let res = gapscreen(&[
        "solve-ref",
        "--data",
        s(&data),
        "--lambda-ratio",
        "1",
        "--out",
        s(tmp.path()),
    ]);
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let beta =
        parse_coefficients(&fs::read_to_string(tmp.path().join("ref.txt")).unwrap()).unwrap();
    assert_eq!(beta, vec![0.0; 15]);
}

#[test]
fn reference_meets_tolerance_and_is_repeatable() {
    let tmp = TempDir::new().unwrap();
    let data_path = write_data(tmp.path(), 50, 200, 7);
    let mut files = Vec::new();
    for (dir, algo) in [("a", "saga"), ("b", "saga"), ("c", "pgd")] {
        let out = tmp.path().join(dir);
        let res = gapscreen(&[
            "solve-ref",
            "--data",
            s(&data_path),
            "--algo",
            algo,
            "--tol",
            "1e-9",
            "--out",
            s(&out),
        ]);
        assert!(
            res.status.success(),
            "{}",
            String::from_utf8_lossy(&res.stderr)
        );
        files.push(fs::read_to_string(out.join("ref.txt")).unwrap());
    }
    assert_eq!(files[0], files[1]);

    let (data, _) = lasso_problem(50, 200, 4, 0.01, 7);
    let loss = LossModel::new(LossKind::Squared);
    let reg = GroupRegularizer::l1(200);
    let lambda = lambda_max(&data, &loss, &reg).unwrap() / 2.0;
    for text in &files {
        let beta = parse_coefficients(text).unwrap();
        assert_eq!(beta.len(), 200);
        assert!(scaled_finite_gap(&beta, &data, &loss, &reg, lambda) <= 1e-9);
    }
}

#[test]
fn group_file_and_feature_override() {
    let tmp = TempDir::new().unwrap();
    let data = write_data(tmp.path(), 20, 12, 8);
    let groups = tmp.path().join("groups.txt");
    fs::write(&groups, "4 4 4 3\n").unwrap();
    let res = gapscreen(&[
        "run",
        "--data",
        s(&data),
        "--n-override",
        "15",
        "--normalize",
        "--reg",
        "group-l12",
        "--groups",
        s(&groups),
        "--algo",
        "fs-proxsgd",
        "--epochs",
        "8",
        "--out",
        s(tmp.path()),
    ]);
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let model =
        parse_coefficients(&fs::read_to_string(tmp.path().join("model.txt")).unwrap()).unwrap();
    assert_eq!(model.len(), 15);

    fs::write(&groups, "4 4\n").unwrap();
    let res = gapscreen(&[
        "run",
        "--data",
        s(&data),
        "--reg",
        "group-l12",
        "--groups",
        s(&groups),
        "--out",
        s(tmp.path()),
    ]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn classification_loss_rejects_real_labels() {
    let tmp = TempDir::new().unwrap();
    let data = write_data(tmp.path(), 10, 5, 9);
    let res = gapscreen(&[
        "run",
        "--data",
        s(&data),
        "--loss",
        "logistic",
        "--out",
        s(tmp.path()),
    ]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn no_screen_run_matches_plain_model() {
    let tmp = TempDir::new().unwrap();
    let data = write_data(tmp.path(), 20, 25, 10);
    let mut models = Vec::new();
    for algo in ["proxsgd", "fs-proxsgd", "os-proxsgd"] {
        let out = tmp.path().join(algo);
        let res = gapscreen(&[
            "run",
            "--data",
            s(&data),
            "--algo",
            algo,
            "--epochs",
            "10",
            "--no-screen",
            "--out",
            s(&out),
        ]);
        assert!(res.status.success());
        models.push(fs::read_to_string(out.join("model.txt")).unwrap());
    }
    assert_eq!(models[0], models[1]);
    assert_eq!(models[0], models[2]);
}
