use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hmc_tune::config::ExperimentConfig;
use hmc_tune::output::read_csv;
use proptest::prelude::*;

fn hmc_tune(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hmc-tune"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.toml");
    fs::write(&path, text).unwrap();
    path
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn column(header: &[String], rows: &[Vec<String>], name: &str) -> Vec<String> {
    let j = header.iter().position(|h| h == name).unwrap_or_else(|| panic!("missing column {name}"));
    rows.iter().map(|r| r[j].clone()).collect()
}

fn floats(header: &[String], rows: &[Vec<String>], name: &str) -> Vec<f64> {
    column(header, rows, name).iter().map(|v| v.parse().unwrap()).collect()
}

#[test]
fn tune_prints_the_optimum_and_writes_the_curve() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = hmc_tune(&["tune", "--out", out, "--deterministic", "--plot"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("optimal acceptance: 0.651"));
    let (header, rows) = read_csv(&dir.path().join("tune.csv")).unwrap();
    assert_eq!(header, ["a", "eff", "l", "eff_absolute", "eff_normalized", "is_argmax"]);
    assert_eq!(rows.len(), 999);
    let flags = column(&header, &rows, "is_argmax");
    assert_eq!(flags.iter().filter(|f| *f == "true").count(), 1);
    let i = flags.iter().position(|f| f == "true").unwrap();
    assert!((floats(&header, &rows, "a")[i] - 0.651).abs() <= 1e-3);
    assert!(fs::read_to_string(dir.path().join("tune.svg")).unwrap().starts_with("<svg"));
}

#[test]
fn oracle_check_residuals() {
    let dir = tempfile::tempdir().unwrap();
    let o = hmc_tune(&["oracle-check", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (header, rows) = read_csv(&dir.path().join("oracle_check.csv")).unwrap();
    let residuals = floats(&header, &rows, "residual");
    assert!(!residuals.is_empty());
    assert!(residuals.iter().all(|r| *r <= 1e-10));
}

#[test]
fn missing_config_names_the_path() {
    let o = hmc_tune(&["tune", "--config", "/nonexistent/dir/exp.toml"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("/nonexistent/dir/exp.toml"));
}

#[test]
fn malformed_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), "[tune]\nn = \"many\"\n");
    let o = hmc_tune(&["tune", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let path = write_config(dir.path(), "[tune]\nlo = 0.9\nhi = 0.1\n");
    let o = hmc_tune(&["tune", "--config", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn unknown_subcommand_fails() {
    let o = hmc_tune(&["nuts"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("nuts"));
}

#[test]
fn numerical_failures_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(
        dir.path(),
        "[scaling]\nd_grid = [64]\nn_transitions = 200\nreplicates = 2\ndiagnostic = true\n",
    );
    let o = hmc_tune(&["scaling", "--config", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

const SMALL_BUDGET: &str = "seed = 11\n[budget]\nd = 32\nbudget = 40000\nreplicates = 1\nacceptance_grid = [0.5, 0.8]\n";

#[test]
fn identical_runs_give_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), SMALL_BUDGET);
    let out = dir.path().join("out");
    let run = |_: &str, extra: &[&str]| {
        let mut args = vec!["budget", "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap()];
        args.extend_from_slice(extra);
        let o = hmc_tune(&args);
        assert!(o.status.success(), "{}", stderr(&o));
        fs::read_to_string(out.join("budget.csv")).unwrap()
    };
    let a = run("a", &["--deterministic"]);
    let b = run("b", &["--deterministic"]);
    assert_eq!(a, b);
    assert!(!a.contains("generated-at"));
    let stamped = run("c", &[]);
    assert!(stamped.contains("# generated-at"));
    let body = |s: &str| s.lines().filter(|l| !l.starts_with('#')).collect::<Vec<_>>().join("\n");
    assert_eq!(body(&a), body(&stamped));
}

#[test]
fn budget_rows_respect_the_budget() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), SMALL_BUDGET);
    let o = hmc_tune(&["budget", "--config", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "--plot"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (header, rows) = read_csv(&dir.path().join("budget.csv")).unwrap();
    assert_eq!(
        &header[..6],
        ["h", "replicate", "f_name", "sq_error", "mean_acceptance", "n_legs"]
    );
    assert_eq!(rows.len(), 2 * 4);
    let n_legs = floats(&header, &rows, "n_legs");
    let n_steps = floats(&header, &rows, "n_steps");
    for (legs, steps) in n_legs.iter().zip(&n_steps) {
        assert!(legs * (steps + 1.0) * 32.0 <= 40_000.0);
    }
    assert!(dir.path().join("budget.svg").exists());
    assert!(dir.path().join("budget_summary.csv").exists());

    let path = write_config(dir.path(), "[budget]\nd = 32\nbudget = 10\nreplicates = 1\n");
    let o = hmc_tune(&["budget", "--config", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn flags_override_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), "seed = 5\n[tune]\nn = 11\n");
    let out = dir.path().join("o");
    let o = hmc_tune(&[
        "tune", "--config", path.to_str().unwrap(), "--seed", "9", "--out", out.to_str().unwrap(), "--deterministic",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(out.join("tune.csv")).unwrap();
    assert!(text.contains("# seed = 9\n"));
    assert!(text.contains("#   seed = 9\n"));
    assert_eq!(read_csv(&out.join("tune.csv")).unwrap().1.len(), 11);
}

#[test]
fn small_experiments_emit_their_schemas() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(
        dir.path(),
        r#"
[moments]
h_grid = [0.4, 0.2, 0.1]
n = 2000

[scaling]
d_grid = [16, 64]
n_transitions = 500

[sjd]
d = 64
delta = 0.1
l_values = [1.0]
n_transitions = 500

[baselines]
d_grid = [16, 64]
n_transitions = 500
"#,
    );
    let expect = [
        ("moments", vec!["target", "h", "n", "mu_hat", "se_mu", "s2_hat"]),
        ("scaling", vec!["d", "h", "n_steps", "acc_mean", "acc_se", "acc_pred", "jump2_mean", "jump2_se", "jump2_pred"]),
        ("sjd", vec!["l", "prediction", "empirical", "ratio"]),
        ("baselines", vec!["scheme", "exponent", "l", "d", "h", "acc_mean", "acc_se"]),
    ];
    for (sub, cols) in expect {
        let o = hmc_tune(&[sub, "--config", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "--plot"]);
        assert!(o.status.success(), "{sub}: {}", stderr(&o));
        let (header, rows) = read_csv(&dir.path().join(format!("{sub}.csv"))).unwrap();
        assert_eq!(&header[..cols.len()], cols.as_slice(), "{sub}");
        assert!(!rows.is_empty());
        for row in &rows {
            assert_eq!(row.len(), header.len());
        }
        assert!(dir.path().join(format!("{sub}.svg")).exists(), "{sub}");
    }
    let (header, rows) = read_csv(&dir.path().join("scaling.csv")).unwrap();
    let h = floats(&header, &rows, "h");
    assert_eq!(h[1], 64f64.powf(-0.25));
}

#[test]
fn default_config_round_trips() {
    let c = ExperimentConfig::default();
    assert_eq!(ExperimentConfig::from_toml(&c.to_toml().unwrap()).unwrap(), c);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn configs_round_trip_exactly(
        seed in 0u64..(1 << 62),
        l in proptest::num::f64::POSITIVE | proptest::num::f64::NORMAL,
        grid in proptest::collection::vec(proptest::num::f64::ANY.prop_filter("finite", |x| x.is_finite()), 1..6),
        d_grid in proptest::collection::vec(1usize..100_000, 1..6),
        threads in proptest::option::of(1usize..64),
        scale in 1e-3f64..1e3,
    ) {
        let mut c = ExperimentConfig { seed, threads, ..ExperimentConfig::default() };
        c.scaling.l = l;
        c.scaling.d_grid = d_grid;
        c.moments.h_grid = grid.clone();
        c.budget.acceptance_grid = grid;
        c.target.params.insert("scale".into(), scale);
        c.tune.sigma = Some(scale / 7.0);
        let text = c.to_toml().unwrap();
        let back = ExperimentConfig::from_toml(&text).unwrap();
        prop_assert_eq!(back.scaling.l.to_bits(), c.scaling.l.to_bits());
        prop_assert_eq!(&back, &c);
        prop_assert_eq!(back.to_toml().unwrap(), text);
    }
}
