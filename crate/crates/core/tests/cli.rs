use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use rvl_core::cli::csv::{RegressionRow, OAC_HEADER, REGRESSION_HEADER};
use rvl_core::cli::{emit_csv, render_csv, run_experiment, write_run, CliError, ExperimentConfig, RunSummary, Trace};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rvl"))
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn write_cfg(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, format!("[experiment]\n{body}")).unwrap();
    path
}

/// Minimal CSV reader, independent of the writer.
fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = fs::read_to_string(path).unwrap();
    assert!(!text.contains('\r'));
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .map(|l| l.split(',').map(|v| v.parse::<f64>().unwrap()).collect())
        .collect();
    (header, rows)
}

fn column(header: &[String], rows: &[Vec<f64>], name: &str) -> Vec<f64> {
    let i = header.iter().position(|h| h == name).unwrap();
    rows.iter().map(|r| r[i]).collect()
}

fn read_summary(path: &Path) -> RunSummary {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn shipped_configs_parse_and_round_trip() {
    let mut count = 0;
    for entry in fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|x| x == "cfg") {
            let cfg = ExperimentConfig::from_file(&path)
                .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            assert_eq!(ExperimentConfig::parse(&cfg.to_string()).unwrap(), cfg);
            count += 1;
        }
    }
    assert!(count >= 7);
}

#[test]
fn config_errors_exit_nonzero_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("alpha.cfg", "kind = normalized_regression\nalpha = 2.5\n", "line 3: alpha: alpha must lie in (0,2)"),
        ("margin.cfg", "kind = disturbed_sigma_mod\nm = 0.5\nd = 1\n", "m must exceed max{d,1}"),
        ("unknown.cfg", "kind = convex_ogd\nlearning_rate = 1\n", "line 3: learning_rate: unknown key"),
        ("number.cfg", "kind = convex_ogd\nseed = x\n", "malformed number"),
    ];
    for (name, body, expected) in cases {
        let path = write_cfg(dir.path(), name, body);
        let out = bin()
            .args(["run", path.to_str().unwrap(), "--out"])
            .arg(dir.path().join("out"))
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(2), "{name}");
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.contains(expected), "{name}: {err}");
    }
}

#[test]
fn run_writes_outputs_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        dir.path(),
        "ogd.cfg",
        "kind = convex_ogd\nhorizon = 2000\nseed = 3\n",
    );
    let mut csvs = Vec::new();
    for run in ["a", "b"] {
        let out_dir = dir.path().join(run);
        let status = bin()
            .args(["run", cfg.to_str().unwrap(), "--seed", "11", "--out"])
            .arg(&out_dir)
            .status()
            .unwrap();
        assert!(status.success());
        let summary = read_summary(&out_dir.join("ogd_seed11.summary.json"));
        assert_eq!(summary.seed, 11);
        assert!(summary.passed);
        assert!(out_dir.join("ogd_seed11.resolved.cfg").exists());
        csvs.push(fs::read(out_dir.join("ogd_seed11.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
}

#[test]
fn rvl_out_is_the_default_directory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "nr.cfg", "kind = normalized_regression\nhorizon = 200\n");
    let target = dir.path().join("from_env");
    let status = bin()
        .args(["run", cfg.to_str().unwrap()])
        .env("RVL_OUT", &target)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(target.join("nr_seed0.csv").exists());
}

#[test]
fn failing_verdict_gives_exit_one() {
    // a gradient bound far below the true one breaks the honesty check
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        dir.path(),
        "lowg.cfg",
        "kind = convex_ogd\nhorizon = 200\ngrad_bound = 0.001\n",
    );
    let out = bin()
        .args(["run", cfg.to_str().unwrap(), "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("[FAIL] gradient_bound"));
}

#[test]
fn summary_scalars_recompute_from_regression_csv() {
    let dir = tempfile::tempdir().unwrap();
    for (stem, body) in [
        ("ogd", "kind = convex_ogd\nhorizon = 3000\nseed = 5\n"),
        ("nr", "kind = normalized_regression\nhorizon = 3000\nalpha = 0.7\nfeature = sinusoid_bank\n"),
        ("ds", "kind = disturbed_sigma_mod\nhorizon = 3000\ntheta_init = 2, 2\n"),
    ] {
        let cfg = ExperimentConfig::parse(&format!("[experiment]\n{body}")).unwrap();
        let out = run_experiment(&cfg).unwrap();
        let written = write_run(&cfg, &out, dir.path(), stem).unwrap();
        let summary = read_summary(&written.summary);
        let (header, rows) = read_csv(&written.csv);
        assert_eq!(header.join(","), REGRESSION_HEADER);
        assert_eq!(rows.len(), 3000);

        let reg = *column(&header, &rows, "reg_partial").last().unwrap();
        let expected = summary.scalar("regret").unwrap();
        assert!((reg - expected).abs() <= 1e-12 * expected.abs().max(1.0), "{stem}");

        if let Some(max_dv) = summary.scalar("max_dV") {
            let e = column(&header, &rows, "e");
            let dv = column(&header, &rows, "dV");
            let v = column(&header, &rows, "V");
            let sum_e2: f64 = e.iter().map(|x| x * x).sum();
            let csv_max = dv.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let tail = e[1500..].iter().map(|x| x.abs()).fold(0.0, f64::max);
            assert_eq!(csv_max, max_dv);
            assert!((sum_e2 - summary.scalar("sum_e2").unwrap()).abs() <= 1e-12 * sum_e2.max(1.0));
            assert_eq!(v[0], summary.scalar("V1").unwrap());
            assert_eq!(tail, summary.scalar("tail_abs_e").unwrap());
            if let Some(c1) = summary.scalar("c1") {
                let square_summable = sum_e2 <= c1 * v[0] * (1.0 + 1e-12);
                assert_eq!(square_summable, summary.verdict("square_summable").unwrap().pass);
                assert_eq!(csv_max <= 1e-12, summary.verdict("lyapunov_descent").unwrap().pass);
            }
        }
    }
}

#[test]
fn oac_csv_recomputes_regret() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::parse("[experiment]\nkind = oac\nhorizon = 500\nseed = 2\n").unwrap();
    let out = run_experiment(&cfg).unwrap();
    let written = write_run(&cfg, &out, dir.path(), "oac").unwrap();
    let (header, rows) = read_csv(&written.csv);
    assert_eq!(header.join(","), OAC_HEADER);
    let cost = column(&header, &rows, "cost");
    let cost_opt = column(&header, &rows, "cost_opt");
    let reg: f64 = cost.iter().zip(&cost_opt).map(|(a, b)| a - b).sum();
    let summary = read_summary(&written.summary);
    let expected = summary.scalar("reg_oac").unwrap();
    assert!((reg - expected).abs() <= 1e-12 * expected.abs().max(1.0));
    let flags = column(&header, &rows, "gain_flag");
    // the first n+m = 2 steps are warm-up
    assert_eq!(&flags[..3], &[2.0, 2.0, 0.0]);
    let sigma = column(&header, &rows, "sigma_xi");
    assert!(sigma.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn csv_edge_cases() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("one.csv");
    let trace = Trace::Regression(vec![RegressionRow {
        t: 1,
        eta: 1.0,
        loss: 0.5,
        e: 1.0,
        v: 1.0,
        dv: -1.0,
        reg_partial: 0.5,
    }]);
    emit_csv(&trace, &path).unwrap();
    assert_eq!(fs::read_to_string(&path).unwrap().lines().count(), 2);

    assert!(matches!(
        emit_csv(&Trace::Regression(vec![]), &dir.path().join("empty.csv")),
        Err(CliError::EmptyTrace)
    ));
    assert!(!dir.path().join("empty.csv").exists());
    assert!(matches!(
        emit_csv(&trace, &dir.path().join("missing/sub/x.csv")),
        Err(CliError::Io { .. })
    ));

    let cfg = ExperimentConfig::parse("[experiment]\nkind = convex_ogd\nhorizon = 1\n").unwrap();
    let out = run_experiment(&cfg).unwrap();
    assert_eq!(render_csv(&out.trace).unwrap().lines().count(), 2);
}

#[test]
fn suite_and_lemmas_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    write_cfg(dir.path(), "a.cfg", "kind = normalized_regression\nhorizon = 100\n");
    write_cfg(dir.path(), "b.cfg", "kind = strongly_convex\nhorizon = 1000\n");
    let out = bin()
        .args(["suite", dir.path().to_str().unwrap(), "--out"])
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}");
    assert_eq!(stdout.matches("PASS").count(), 2);

    write_cfg(dir.path(), "c.cfg", "kind = convex_ogd\nalpha = 1\n");
    let out = bin()
        .args(["suite", dir.path().to_str().unwrap(), "--out"])
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));

    let out = bin().args(["lemmas", "--trials", "50"]).output().unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}");
    assert_eq!(stdout.matches("[PASS]").count(), 3);
}
