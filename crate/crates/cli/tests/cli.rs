use std::fs;
use std::path::Path;

use proptest::prelude::*;
use quasidual_cli::config::{LambdaRange, RunConfig, Scale, StartKind};
use quasidual_cli::{run, EXIT_NUMERICAL, EXIT_OK, EXIT_REFUSAL, EXIT_USAGE};

fn cli(args: &[&str]) -> i32 {
    let mut argv = vec!["quasidual"];
    argv.extend_from_slice(args);
    run(argv)
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn solve_happy_path_writes_report_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let code = cli(&["solve", "--theta", "theta1", "--q", "0.5", "--lambda", "1", "--dim", "1", "--n", "400", "--output-dir", out]);
    assert_eq!(code, EXIT_OK);
    let report = read(dir.path(), "report.txt");
    assert!(report.contains("converged=true"));
    let csv = read(dir.path(), "solution.csv");
    assert!(csv.starts_with("x,v,u\n"));
    assert_eq!(csv.lines().count(), 401);
    let manifest = read(dir.path(), "manifest.txt");
    assert!(manifest.lines().next().unwrap().starts_with("config_sha256="));
    assert!(manifest.contains("  solution.csv"));
}

#[test]
fn nonpositive_lambda_is_a_refusal() {
    assert_eq!(cli(&["solve", "--q", "0.5", "--lambda", "-1"]), EXIT_REFUSAL);
    assert_eq!(cli(&["solve", "--q", "2", "--lambda", "0"]), EXIT_REFUSAL);
}

#[test]
fn linear_case_below_threshold_is_a_refusal() {
    assert_eq!(cli(&["solve", "--q", "1", "--lambda", "5", "--n", "100"]), EXIT_REFUSAL);
    assert_eq!(cli(&["solve", "--q", "1", "--lambda", "15", "--n", "100"]), EXIT_OK);
}

#[test]
fn below_the_fold_is_a_numerical_failure() {
    assert_eq!(cli(&["solve", "--q", "2", "--lambda", "5", "--n", "100"]), EXIT_NUMERICAL);
}

#[test]
fn usage_errors() {
    assert_eq!(cli(&["frobnicate"]), EXIT_USAGE);
    assert_eq!(cli(&["solve", "--colour", "red"]), EXIT_USAGE);
    assert_eq!(cli(&["solve", "--q", "abc", "--lambda", "1"]), EXIT_USAGE);
    assert_eq!(cli(&["solve", "--lambda", "1"]), EXIT_USAGE);
    assert_eq!(cli(&["solve", "--q", "1", "--lambda", "1", "--theta", "theta9"]), EXIT_USAGE);
    assert_eq!(cli(&["threshold", "--q", "5"]), EXIT_USAGE);
    assert_eq!(cli(&["solve", "--q", "0.5", "--lambda", "1", "--config", "/nonexistent/cfg"]), EXIT_USAGE);
    assert_eq!(cli(&["--help"]), EXIT_OK);
}

#[test]
fn sweep_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for (d, par) in [(&a, false), (&b, true)] {
        let mut args = vec!["sweep", "--q", "0.5", "--lambda-range", "0.01:100:9", "--n", "100", "--output-dir"];
        args.push(d.path().to_str().unwrap());
        if par {
            args.push("--parallel");
        }
        assert_eq!(cli(&args), EXIT_OK);
    }
    let csv = read(a.path(), "branch.csv");
    assert!(csv.starts_with("lambda,sup_v,sup_u,energy,stability,converged,branch_id\n"));
    assert_eq!(csv.lines().count(), 10);
    assert_eq!(csv, read(b.path(), "branch.csv"));

    let c = tempfile::tempdir().unwrap();
    let args = ["sweep", "--q", "0.5", "--lambda-range", "0.01:100:9", "--n", "100", "--output-dir", c.path().to_str().unwrap()];
    assert_eq!(cli(&args), EXIT_OK);
    assert_eq!(read(a.path(), "branch.csv"), read(c.path(), "branch.csv"));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# linear case\ntheta=theta1\nq=1\nn=100\nlambda=5\n").unwrap();
    let out = dir.path().join("out");
    let args = ["solve", "--config", cfg.to_str().unwrap(), "--lambda", "20", "--output-dir", out.to_str().unwrap()];
    assert_eq!(cli(&args), EXIT_OK);
    let saved = RunConfig::parse(&read(&out, "config.txt")).unwrap();
    assert_eq!(saved.lambda, Some(20.0));
    assert_eq!(saved.n, 100);

    fs::write(&cfg, "q=1\nq=2\n").unwrap();
    assert_eq!(cli(&["solve", "--config", cfg.to_str().unwrap()]), EXIT_USAGE);
}

#[test]
fn threshold_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(cli(&["threshold", "--q", "1", "--n", "200", "--output-dir", out]), EXIT_OK);
    let text = read(dir.path(), "threshold.csv");
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("estimate,predicted,relative_error"));
    let vals: Vec<f64> = lines.next().unwrap().split(',').map(|x| x.parse().unwrap()).collect();
    assert!(vals[2] < 2e-3);
    assert!((vals[0] - std::f64::consts::PI.powi(2)).abs() < 0.02);
}

#[test]
fn pohozaev_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(cli(&["pohozaev-check", "--theta", "theta1", "--q", "11", "--N", "3", "--output-dir", out]), EXIT_OK);
    assert!(read(dir.path(), "verdict.txt").contains("verdict: nonexistence condition satisfied"));
    let csv = read(dir.path(), "pohozaev.csv");
    assert!(csv.starts_with("s,z,ratio\n"));
    assert_eq!(csv.lines().count(), 1001);
    let d2 = tempfile::tempdir().unwrap();
    let out2 = d2.path().to_str().unwrap();
    assert_eq!(cli(&["pohozaev-check", "--q", "2", "--N", "3", "--output-dir", out2]), EXIT_OK);
    assert!(read(d2.path(), "verdict.txt").contains("not satisfied"));
}

#[test]
fn regime_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(cli(&["regimes", "--q", "0.5", "--output-dir", out]), EXIT_OK);
    assert!(read(dir.path(), "regimes.txt").contains("unique positive solution for every λ>0"));
    assert_eq!(cli(&["regimes", "--q", "3", "--output-dir", out]), EXIT_OK);
    assert!(read(dir.path(), "regimes.txt").contains("positive solution iff λ>(α²/4)λ₁"));
    assert_eq!(cli(&["regimes", "--q", "11", "--N", "3", "--output-dir", out]), EXIT_OK);
    assert!(read(dir.path(), "regimes.txt").contains("no positive solution (starshaped Ω)"));
}

#[test]
fn transform_table_export() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(cli(&["transform", "--theta", "theta3", "--output-dir", out]), EXIT_OK);
    let csv = read(dir.path(), "transform.csv");
    assert!(csv.starts_with("s,f,f_prime,f_second\n"));
    assert!(csv.lines().count() > 100);
    assert_eq!(cli(&["validate-theta", "--theta", "theta1", "--output-dir", out]), EXIT_OK);
    assert_eq!(cli(&["validate-theta", "--theta", "unit"]), EXIT_NUMERICAL);
}

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![-1e6f64..1e6, (-12.0f64..12.0).prop_map(|e| 10f64.powf(e))]
}

fn config() -> impl Strategy<Value = RunConfig> {
    (
        (prop::sample::select(vec!["theta1", "theta3", "unit", "theta2:p=1.5"]), prop::option::of(finite()), prop::option::of(finite())),
        (prop::option::of((finite(), finite(), 2usize..100)), any::<bool>(), 1usize..3, 1usize..1000),
        (finite(), finite(), prop::option::of(finite()), finite(), 0usize..100_000),
        (0u8..3, any::<bool>(), 1usize..10, finite(), finite(), 2usize..5000),
        prop::option::of("[a-z][a-z0-9_/]{0,12}"),
    )
        .prop_map(|((theta, q, lambda), (range, log, dim, n), (pad, tol, s_max, r, max_iter), (st, parallel, big_n, s_lo, s_hi, samples), dir)| {
            RunConfig {
                theta: theta.to_string(),
                q,
                lambda,
                lambda_range: range.map(|(min, max, count)| LambdaRange { min, max, count }),
                scale: if log { Scale::Log } else { Scale::Linear },
                dim,
                n,
                bounds: if dim == 2 { Some(vec![(0.0, 1.5), (-1.0, 2.0)]) } else { None },
                pad,
                tol,
                s_max,
                r,
                max_iter,
                start: [StartKind::Auto, StartKind::Sub, StartKind::Super][st as usize],
                parallel,
                big_n,
                s_lo,
                s_hi,
                samples,
                output_dir: dir.map(Into::into),
            }
        })
}

proptest! {
    #[test]
    fn config_round_trips(c in config()) {
        let text = c.canonical();
        let back = RunConfig::parse(&text).unwrap();
        prop_assert_eq!(&back, &c);
        prop_assert_eq!(back.canonical(), text);
        prop_assert_eq!(back.hash(), c.hash());
    }
}
