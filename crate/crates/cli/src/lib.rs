//! Command-line front end: configuration, regime dispatch and CSV output.
//!
//! Exit codes: 0 success, 1 refusal (no positive solution can exist),
//! 2 numerical failure, 64 usage or configuration error.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod output;

use std::f64::consts::PI;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use quasidual::continuation::{
    bifurcation_from_infinity, find_lambda_star, linear_threshold, maximal_solution, superlinear_solution, sweep,
    SweepOptions,
};
use quasidual::dual_transform::{auto_extent, DualTransform, DEFAULT_S_MAX};
use quasidual::mesh::DomainMesh;
use quasidual::nonlinearity::{critical_exponent, Nonlinearity, Regime};
use quasidual::solver::{Problem, SolveConfig, SolveReport, Start};
use quasidual::theta::{catalog, validate_hypotheses, ThetaSpec};

use config::{ConfigError, RunConfig, StartKind};
use output::{fmt_num, Csv, Sink};

pub const EXIT_OK: i32 = 0;
pub const EXIT_REFUSAL: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

#[derive(Parser, Debug)]
#[command(name = "quasidual", version, about = "Dual-transform solver for quasilinear Schrodinger problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check the structural hypotheses of a coefficient (or `all`).
    ValidateTheta(Opts),
    /// Build the change of variable, check it and export its table.
    Transform(Opts),
    /// Solve at one λ with the method the regime prescribes.
    Solve(Opts),
    /// Solve along a λ range and write branch.csv.
    Sweep(Opts),
    /// Estimate the existence threshold (q = 1, 1 < q < 3 or q = 3).
    Threshold(Opts),
    /// Scan the Pohozaev function and ratio.
    PohozaevCheck(Opts),
    /// Print the expected solution structure for q.
    Regimes(Opts),
}

#[derive(Args, Debug, Default)]
struct Opts {
    /// key=value configuration file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    theta: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    q: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    lambda: Option<String>,
    /// min:max:count
    #[arg(long, allow_hyphen_values = true)]
    lambda_range: Option<String>,
    /// log or linear spacing of the λ range.
    #[arg(long)]
    scale: Option<String>,
    #[arg(long)]
    dim: Option<String>,
    /// Interior nodes per axis.
    #[arg(long)]
    n: Option<String>,
    /// a,b or a,b;c,d
    #[arg(long, allow_hyphen_values = true)]
    bounds: Option<String>,
    #[arg(long)]
    pad: Option<String>,
    #[arg(long)]
    tol: Option<String>,
    /// Transform extent or `auto`.
    #[arg(long)]
    s_max: Option<String>,
    /// Sub-solution exponent for 1 < q < 3.
    #[arg(long)]
    r: Option<String>,
    #[arg(long)]
    max_iter: Option<String>,
    /// auto, sub or super.
    #[arg(long)]
    start: Option<String>,
    /// Cold-start sweep points in parallel (q ≤ 1).
    #[arg(long)]
    parallel: bool,
    /// Dimension for the Pohozaev scan and the regime table.
    #[arg(long = "N")]
    big_n: Option<String>,
    #[arg(long)]
    s_lo: Option<String>,
    #[arg(long)]
    s_hi: Option<String>,
    #[arg(long)]
    samples: Option<String>,
    #[arg(long)]
    output_dir: Option<String>,
}

impl Opts {
    fn into_config(self) -> Result<RunConfig, Failure> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
            cfg.apply_text(&text)?;
        }
        let pairs = [
            ("theta", self.theta),
            ("q", self.q),
            ("lambda", self.lambda),
            ("lambda_range", self.lambda_range),
            ("scale", self.scale),
            ("dim", self.dim),
            ("n", self.n),
            ("bounds", self.bounds),
            ("pad", self.pad),
            ("tol", self.tol),
            ("s_max", self.s_max),
            ("r", self.r),
            ("max_iter", self.max_iter),
            ("start", self.start),
            ("N", self.big_n),
            ("s_lo", self.s_lo),
            ("s_hi", self.s_hi),
            ("samples", self.samples),
            ("output_dir", self.output_dir),
        ];
        for (key, value) in pairs {
            if let Some(v) = value {
                cfg.set(key, &v)?;
            }
        }
        if self.parallel {
            cfg.parallel = true;
        }
        Ok(cfg)
    }
}

/// Why a command did not succeed.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Refusal(String),
    Numerical(String),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Refusal(_) => EXIT_REFUSAL,
            Failure::Numerical(_) => EXIT_NUMERICAL,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Usage(e.0)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Numerical(format!("i/o: {e}"))
    }
}

impl From<quasidual::Error> for Failure {
    fn from(e: quasidual::Error) -> Self {
        use quasidual::Error as E;
        match &e {
            E::NonPositiveLambda { .. } => Failure::Refusal(format!("refused: {e}")),
            E::NoSubsolution { .. } => Failure::Refusal(format!(
                "refused: {e}; for q = 1 a positive solution needs lambda above theta(0)*lambda_1"
            )),
            E::InvalidArgument(_) | E::MeshMismatch { .. } => Failure::Usage(e.to_string()),
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

type Outcome = Result<(), Failure>;

/// Parses `argv` (program name first) and runs the subcommand.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::ValidateTheta(o) => o.into_config().and_then(|c| validate_theta(&c)),
        Command::Transform(o) => o.into_config().and_then(|c| transform(&c)),
        Command::Solve(o) => o.into_config().and_then(|c| solve(&c)),
        Command::Sweep(o) => o.into_config().and_then(|c| run_sweep(&c)),
        Command::Threshold(o) => o.into_config().and_then(|c| threshold(&c)),
        Command::PohozaevCheck(o) => o.into_config().and_then(|c| pohozaev_check(&c)),
        Command::Regimes(o) => o.into_config().and_then(|c| regimes(&c)),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let msg = match &f {
                Failure::Usage(m) | Failure::Refusal(m) | Failure::Numerical(m) => m,
            };
            eprintln!("quasidual: {msg}");
            f.code()
        }
    }
}

fn sink(cfg: &RunConfig) -> Result<Sink, Failure> {
    Ok(Sink::new(cfg.output_dir.as_deref())?)
}

fn theta_spec(cfg: &RunConfig) -> Result<ThetaSpec, Failure> {
    ThetaSpec::from_name(&cfg.theta).map_err(|e| Failure::Usage(e.to_string()))
}

fn build_transform(cfg: &RunConfig, s_max: f64) -> Result<Arc<DualTransform>, Failure> {
    Ok(Arc::new(DualTransform::build(theta_spec(cfg)?, s_max, quasidual::dual_transform::DEFAULT_TOL)?))
}

fn mesh(cfg: &RunConfig) -> Result<DomainMesh, Failure> {
    if cfg.n == 0 {
        return Err(Failure::Usage("n must be at least 1".into()));
    }
    Ok(DomainMesh::new(cfg.domain()?, cfg.n, cfg.pad)?)
}

/// The problem with a transform wide enough for the expected solutions: for
/// `1 < q < 3` the table must cover ten times the a-priori bound `max Cψ`
/// at the largest λ.
fn build_problem(cfg: &RunConfig, q: f64, lambda_max: Option<f64>) -> Result<Problem, Failure> {
    let s_max = cfg.s_max.unwrap_or(DEFAULT_S_MAX);
    let t = build_transform(cfg, s_max)?;
    let p = Problem::new(mesh(cfg)?, Nonlinearity::new(q, t.clone())?)?;
    if cfg.s_max.is_some() || !(q > 1.0 && q < 3.0) {
        return Ok(p);
    }
    let (Some(alpha), Some(lambda)) = (t.theta().alpha(), lambda_max) else {
        return Ok(p);
    };
    if !(lambda > 0.0) {
        return Ok(p);
    }
    let (c, psi, _) = p.apriori_profile(lambda, alpha)?;
    let bound = c * psi.max();
    if 10.0 * bound <= t.s_max() {
        return Ok(p);
    }
    log::info!("widening the transform table to cover the bound {bound:e}");
    let wide = build_transform(cfg, auto_extent(bound))?;
    Ok(p.with_nonlinearity(Nonlinearity::new(q, wide)?))
}

fn solve_config(cfg: &RunConfig, lambda: f64) -> SolveConfig {
    SolveConfig::new(lambda).with_tol(cfg.tol).with_max_iter(cfg.max_iter).with_r(cfg.r)
}

fn validate_theta(cfg: &RunConfig) -> Outcome {
    let specs = if cfg.theta == "all" { catalog(1.5)? } else { vec![theta_spec(cfg)?] };
    let s_max = cfg.s_max.unwrap_or(1e6);
    let mut csv = Csv::new(&["theta", "lower_bound", "even", "h1", "h2", "h3", "alpha", "alpha_estimate"]);
    let mut all = true;
    for spec in &specs {
        let r = validate_hypotheses(spec, s_max, cfg.samples.max(2))?;
        all &= r.all_ok();
        csv.row(&[
            spec.name().to_string(),
            r.lower_bound_ok.to_string(),
            r.even_ok.to_string(),
            r.h1_ok.to_string(),
            r.h2_ok.to_string(),
            r.h3_ok.to_string(),
            spec.alpha().map_or_else(|| "none".into(), fmt_num),
            fmt_num(r.alpha_estimate),
        ]);
        println!("{}: {}", spec.name(), if r.all_ok() { "all hypotheses hold" } else { "hypothesis violated" });
        if let Some((at, size)) = r.worst_violation {
            println!("  worst violation {} at s = {}", fmt_num(size), fmt_num(at));
        }
    }
    let mut out = sink(cfg)?;
    out.emit("theta_check.csv", &csv.into_string())?;
    out.finish(cfg)?;
    if all {
        Ok(())
    } else {
        Err(Failure::Numerical("coefficient hypotheses violated".into()))
    }
}

fn transform(cfg: &RunConfig) -> Outcome {
    let t = build_transform(cfg, cfg.s_max.unwrap_or(DEFAULT_S_MAX))?;
    let span = 50f64.min(t.s_max());
    let residual = t.verify(-span, span)?;
    let props = t.check_properties(cfg.samples.max(2))?;
    let mut report = String::new();
    writeln!(report, "theta={}", t.theta().name()).ok();
    writeln!(report, "nodes={}", t.len()).ok();
    writeln!(report, "s_max={}", fmt_num(t.s_max())).ok();
    writeln!(report, "ode_residual_table={}", fmt_num(t.achieved_residual())).ok();
    writeln!(report, "ode_residual_pm50={}", fmt_num(residual)).ok();
    writeln!(report, "derivative_bound={}", props.derivative_bound_ok).ok();
    writeln!(report, "contraction={}", props.contraction_ok).ok();
    writeln!(report, "slope_sandwich={}", props.slope_sandwich_ok).ok();
    writeln!(report, "sqrt_growth={}", props.sqrt_growth_ok).ok();
    if let Some(tail) = &props.tail {
        writeln!(report, "tail_f_over_sqrt={} target={}", fmt_num(tail.f_over_sqrt), fmt_num(tail.sqrt_target)).ok();
        writeln!(report, "tail_fprime_f={} target={}", fmt_num(tail.f_prime_f), fmt_num(tail.product_target)).ok();
    }
    print!("{report}");
    let mut csv = Csv::new(&["s", "f", "f_prime", "f_second"]);
    for (s, _) in t.nodes() {
        csv.row(&[fmt_num(s), fmt_num(t.f_eval(s)?), fmt_num(t.f_prime(s)?), fmt_num(t.f_second(s)?)]);
    }
    let mut out = sink(cfg)?;
    if out.has_dir() {
        out.emit("report.txt", &report)?;
        out.emit("transform.csv", &csv.into_string())?;
    }
    out.finish(cfg)?;
    if props.all_ok() && residual <= t.tol() {
        Ok(())
    } else {
        Err(Failure::Numerical("transform checks failed".into()))
    }
}

/// Runs the regime's method at one λ.
fn solve_at(problem: &Problem, cfg: &RunConfig, lambda: f64) -> Result<(SolveReport, &'static str), Failure> {
    let q = problem.q();
    let sc = solve_config(cfg, lambda);
    let from_certificates = |start: Start, name: &'static str| -> Result<(SolveReport, &'static str), Failure> {
        Ok((problem.solve(&sc, start)?, name))
    };
    if q >= 3.0 {
        if cfg.start != StartKind::Auto {
            return Err(Failure::Usage("sub/super starts need q < 3; use start=auto".into()));
        }
        return match superlinear_solution(problem, lambda, cfg.tol)? {
            Some(r) => Ok((r, "newton from amplitude ladder")),
            None => Err(Failure::Numerical(format!("no positive solution found at lambda = {lambda}"))),
        };
    }
    match (cfg.start, q <= 1.0) {
        (StartKind::Sub, _) | (StartKind::Auto, true) => {
            from_certificates(Start::FromSub, "monotone iteration from sub-solution")
        }
        (StartKind::Super, true) => from_certificates(Start::FromSuper, "monotone iteration from super-solution"),
        (_, false) => match maximal_solution(problem, &sc)? {
            Some(r) => Ok((r, "monotone iteration from super-solution, Newton polish")),
            None => Err(Failure::Numerical(format!(
                "iteration from the super-solution collapsed to zero at lambda = {lambda}: no positive solution found"
            ))),
        },
    }
}

fn solve(cfg: &RunConfig) -> Outcome {
    let q = cfg.require_q()?;
    let lambda = cfg.require_lambda()?;
    quasidual::nonlinearity::require_positive(lambda)?;
    let problem = build_problem(cfg, q, Some(lambda))?;
    let (rep, method) = solve_at(&problem, cfg, lambda)?;
    let (stab, mu) = if rep.converged { problem.stability(lambda, &rep.v)? } else { (0, f64::NAN) };
    let mut report = String::new();
    writeln!(report, "theta={}", cfg.theta).ok();
    writeln!(report, "q={}", fmt_num(q)).ok();
    writeln!(report, "lambda={}", fmt_num(lambda)).ok();
    writeln!(report, "regime={}", problem.nonlinearity().regime(problem.mesh().dim())).ok();
    writeln!(report, "method={method}").ok();
    writeln!(report, "sup_v={}", fmt_num(rep.sup_v)).ok();
    writeln!(report, "sup_u={}", fmt_num(rep.sup_u)).ok();
    writeln!(report, "energy={}", fmt_num(rep.energy)).ok();
    writeln!(report, "residual={}", fmt_num(rep.residual_sup)).ok();
    writeln!(report, "tol={}", fmt_num(rep.tol)).ok();
    writeln!(report, "iterations={}", rep.iterations).ok();
    writeln!(report, "converged={}", rep.converged).ok();
    writeln!(report, "stability={stab:+}").ok();
    writeln!(report, "smallest_eigenvalue={}", fmt_num(mu)).ok();
    print!("{report}");
    let mut out = sink(cfg)?;
    if out.has_dir() {
        out.emit("report.txt", &report)?;
        let dim = problem.mesh().dim();
        let mut header: Vec<&str> = ["x", "y"][..dim].to_vec();
        header.extend(["v", "u"]);
        let mut csv = Csv::new(&header);
        for i in 0..rep.v.len() {
            let mut row: Vec<String> = problem.mesh().coords(i).into_iter().map(fmt_num).collect();
            row.push(fmt_num(rep.v[i]));
            row.push(fmt_num(rep.u[i]));
            csv.row(&row);
        }
        out.emit("solution.csv", &csv.into_string())?;
    }
    out.finish(cfg)?;
    if rep.converged {
        Ok(())
    } else {
        Err(Failure::Numerical(format!("no convergence after {} iterations", rep.iterations)))
    }
}

fn run_sweep(cfg: &RunConfig) -> Outcome {
    let q = cfg.require_q()?;
    let lambdas = cfg.lambdas()?;
    let top = lambdas.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let problem = build_problem(cfg, q, Some(top))?;
    let opts = SweepOptions { tol: cfg.tol, parallel: cfg.parallel, ..Default::default() };
    let points = sweep(&problem, &lambdas, &opts)?;
    let mut csv = Csv::new(&["lambda", "sup_v", "sup_u", "energy", "stability", "converged", "branch_id"]);
    for p in &points {
        csv.row(&[
            fmt_num(p.lambda),
            fmt_num(p.sup_v),
            fmt_num(p.sup_u),
            fmt_num(p.energy),
            p.stability.to_string(),
            p.converged.to_string(),
            p.branch_id.clone(),
        ]);
    }
    let mut out = sink(cfg)?;
    out.emit("branch.csv", &csv.into_string())?;
    out.finish(cfg)?;
    let ok = points.iter().filter(|p| p.converged).count();
    eprintln!("{ok}/{} sweep points converged", points.len());
    Ok(())
}

fn threshold(cfg: &RunConfig) -> Outcome {
    let q = cfg.require_q()?;
    let text = if q == 1.0 || q == 3.0 {
        let problem = build_problem(cfg, q, None)?;
        let est = if q == 1.0 {
            linear_threshold(&problem, cfg.tol)?
        } else {
            bifurcation_from_infinity(&problem, cfg.tol)?.threshold
        };
        format!(
            "estimate,predicted,relative_error\n{},{},{}\n",
            fmt_num(est.estimate),
            fmt_num(est.predicted),
            fmt_num(est.relative_error)
        )
    } else if q > 1.0 && q < 3.0 {
        let probe_problem = build_problem(cfg, q, None)?;
        let l1 = probe_problem.lambda1();
        let (lo, hi) = cfg.lambda_range.map_or((1e-3 * l1, 1e3 * l1), |r| (r.min, r.max));
        let problem = build_problem(cfg, q, Some(hi))?;
        let star = find_lambda_star(&problem, lo, hi, cfg.tol)?;
        format!("lambda_star\n{}\n", fmt_num(star))
    } else {
        return Err(Failure::Usage(format!("threshold is defined for q = 1, 1 < q < 3 and q = 3, got {q}")));
    };
    let mut out = sink(cfg)?;
    if out.has_dir() {
        print!("{text}");
    }
    out.emit("threshold.csv", &text)?;
    out.finish(cfg)?;
    Ok(())
}

fn pohozaev_check(cfg: &RunConfig) -> Outcome {
    let q = cfg.require_q()?;
    let t = build_transform(cfg, cfg.s_max.unwrap_or(DEFAULT_S_MAX.max(cfg.s_hi)))?;
    let r = Nonlinearity::new(q, t)?.pohozaev_scan(cfg.big_n, cfg.s_lo, cfg.s_hi, cfg.samples)?;
    let mut csv = Csv::new(&["s", "z", "ratio"]);
    for s in &r.samples {
        csv.row(&[fmt_num(s.s), fmt_num(s.z), fmt_num(s.ratio)]);
    }
    let mut out = sink(cfg)?;
    out.emit("pohozaev.csv", &csv.into_string())?;
    let verdict = if r.nonexistence {
        "nonexistence condition satisfied"
    } else {
        "nonexistence condition not satisfied"
    };
    let summary = format!(
        "min_z={}\nmax_ratio={}\nratio_bound={}\ncondition={}\nverdict: {verdict}\n",
        fmt_num(r.min_z),
        fmt_num(r.max_ratio),
        fmt_num(r.ratio_bound),
        fmt_num(r.condition)
    );
    if out.has_dir() {
        out.emit("verdict.txt", &summary)?;
    }
    print!("{summary}");
    out.finish(cfg)?;
    Ok(())
}

fn regimes(cfg: &RunConfig) -> Outcome {
    let q = cfg.require_q()?;
    let big_n = cfg.big_n.max(1);
    let spec = theta_spec(cfg)?;
    let lengths: Vec<f64> = match &cfg.bounds {
        Some(b) if b.len() == big_n => b.iter().map(|(a, c)| c - a).collect(),
        _ => vec![1.0; big_n],
    };
    let lambda1 = PI * PI * lengths.iter().map(|l| 1.0 / (l * l)).sum::<f64>();
    let regime = Regime::classify(q, big_n);
    let crit = critical_exponent(big_n);
    let mut t = String::new();
    writeln!(t, "q = {q}, N = {big_n}, theta = {}", spec.name()).ok();
    writeln!(t, "critical exponent (3N+2)/(N-2) = {}", if crit.is_finite() { crit.to_string() } else { "inf".into() })
        .ok();
    writeln!(t, "lambda_1 of the box = {}", fmt_num(lambda1)).ok();
    writeln!(t, "regime: {regime}").ok();
    let (structure, thresh, commands) = match regime {
        Regime::Sublinear => (
            "unique positive solution for every λ>0; |u|∞→0 as λ→0".to_string(),
            "none".to_string(),
            "solve, sweep",
        ),
        Regime::LinearAtZero => (
            "positive solution iff λ>ϑ(0)λ₁".to_string(),
            format!("ϑ(0)λ₁ = {}", fmt_num(spec.at_zero() * lambda1)),
            "solve, sweep, threshold",
        ),
        Regime::Between => (
            "no positive solution for λ<λ*, at least two for λ>λ* (the maximal one stable)".to_string(),
            "λ* (numerical, see `threshold`)".to_string(),
            "solve, sweep, threshold",
        ),
        Regime::CriticalSlope => (
            "positive solution iff λ>(α²/4)λ₁; sup-norm blows up as λ decreases to it".to_string(),
            match spec.alpha() {
                Some(a) => format!("(α²/4)λ₁ = {}", fmt_num(a * a / 4.0 * lambda1)),
                None => "(α²/4)λ₁ undefined: θ has no asymptotic constant".to_string(),
            },
            "solve, sweep, threshold",
        ),
        Regime::Superlinear => (
            "positive solution for every λ>0; |u|∞→∞ as λ→0".to_string(),
            "none".to_string(),
            "solve, sweep",
        ),
        Regime::Supercritical => (
            "no positive solution (starshaped Ω)".to_string(),
            "none".to_string(),
            "pohozaev-check",
        ),
    };
    writeln!(t, "structure: {structure}").ok();
    writeln!(t, "threshold: {thresh}").ok();
    writeln!(t, "commands: {commands}").ok();
    print!("{t}");
    let mut out = sink(cfg)?;
    if out.has_dir() {
        out.emit("regimes.txt", &t)?;
    }
    out.finish(cfg)?;
    Ok(())
}
