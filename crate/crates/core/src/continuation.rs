//! λ-sweeps, threshold bisection and the asymptotic branch studies.

use log::debug;
use rayon::prelude::*;

use crate::linalg::norm_inf;
use crate::mesh::Field;
use crate::nonlinearity::require_positive;
use crate::solver::{Problem, SolveConfig, SolveReport, Start};
use crate::{Error, Result};

/// `sup_v` beyond which a branch counts as blown up.
pub const BLOWUP_FLOOR: f64 = 1e3;
/// Relative bracket width at which threshold bisection stops.
pub const BISECTION_RTOL: f64 = 1e-3;
/// Monotone-iteration budget of one solvability probe.
const PROBE_BUDGET: usize = 3000;

/// One point of a bifurcation diagram.
#[derive(Clone, Debug, PartialEq)]
pub struct BranchPoint {
    pub lambda: f64,
    pub sup_v: f64,
    pub sup_u: f64,
    pub energy: f64,
    /// Sign of the smallest eigenvalue of `-Δ_h - λ diag(g'(v))`: `+1`
    /// stable, `-1` unstable, `0` degenerate or not computed.
    pub stability: i8,
    pub smallest_eigenvalue: f64,
    pub converged: bool,
    pub branch_id: String,
}

impl BranchPoint {
    fn failed(lambda: f64, branch_id: &str) -> Self {
        Self {
            lambda,
            sup_v: f64::NAN,
            sup_u: f64::NAN,
            energy: f64::NAN,
            stability: 0,
            smallest_eigenvalue: f64::NAN,
            converged: false,
            branch_id: branch_id.to_string(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SweepOptions {
    pub tol: f64,
    /// Cold-start the points in parallel (only for `q ≤ 1`, where the
    /// positive solution is unique).
    pub parallel: bool,
    /// Ratio of consecutive `sup_u` above which a new branch label starts.
    pub jump_ratio: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self { tol: crate::solver::DEFAULT_TOL, parallel: false, jump_ratio: 10.0 }
    }
}

/// Converts a report into a branch point, re-checking the residual bound.
pub fn branch_point(problem: &Problem, report: &SolveReport, branch_id: &str) -> Result<BranchPoint> {
    let lambda = report.lambda;
    let residual = norm_inf(&problem.residual(lambda, &report.v)?);
    let converged = report.converged && !report.trivial && residual <= report.tol * (1.0 + lambda);
    let (stability, mu) = if converged { problem.stability(lambda, &report.v)? } else { (0, f64::NAN) };
    Ok(BranchPoint {
        lambda,
        sup_v: report.sup_v,
        sup_u: report.sup_u,
        energy: report.energy,
        stability,
        smallest_eigenvalue: mu,
        converged,
        branch_id: branch_id.to_string(),
    })
}

fn check_lambdas(lambdas: &[f64]) -> Result<()> {
    for &l in lambdas {
        require_positive(l)?;
    }
    if lambdas.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidArgument("lambda values must be distinct".into()));
    }
    let up = lambdas.windows(2).all(|w| w[0] < w[1]);
    let down = lambdas.windows(2).all(|w| w[0] > w[1]);
    if !(up || down) {
        return Err(Error::InvalidArgument("lambda values must be sorted".into()));
    }
    Ok(())
}

/// Solves at every λ with the regime's method: monotone iteration from the
/// sub-solution for `q ≤ 1`, from the super-solution (maximal solution) for
/// `1 < q < 3`, and warm-started Newton continuation for `q ≥ 3`.
///
/// Per-point failures become `converged = false` markers.
pub fn sweep(problem: &Problem, lambdas: &[f64], opts: &SweepOptions) -> Result<Vec<BranchPoint>> {
    check_lambdas(lambdas)?;
    let q = problem.q();
    let mut points = if q <= 1.0 {
        let run = |&lambda: &f64| -> Result<BranchPoint> {
            let cfg = SolveConfig::new(lambda).with_tol(opts.tol);
            match problem.solve(&cfg, Start::FromSub) {
                Ok(rep) => branch_point(problem, &rep, "minimal"),
                Err(e) if recoverable(&e) => Ok(BranchPoint::failed(lambda, "minimal")),
                Err(e) => Err(e),
            }
        };
        if opts.parallel {
            lambdas.par_iter().map(run).collect::<Result<Vec<_>>>()?
        } else {
            lambdas.iter().map(run).collect::<Result<Vec<_>>>()?
        }
    } else if q < 3.0 {
        let mut out = Vec::with_capacity(lambdas.len());
        for &lambda in lambdas {
            let cfg = SolveConfig::new(lambda).with_tol(opts.tol).with_max_iter(PROBE_BUDGET);
            let pt = match maximal_solution(problem, &cfg) {
                Ok(Some(rep)) => branch_point(problem, &rep, "maximal")?,
                Ok(None) => BranchPoint::failed(lambda, "maximal"),
                Err(e) if recoverable(&e) => BranchPoint::failed(lambda, "maximal"),
                Err(e) => return Err(e),
            };
            out.push(pt);
        }
        out
    } else {
        newton_continuation(problem, lambdas, opts.tol)?
            .into_iter()
            .map(|(lambda, rep)| match rep {
                Some(r) => branch_point(problem, &r, "newton"),
                None => Ok(BranchPoint::failed(lambda, "newton")),
            })
            .collect::<Result<Vec<_>>>()?
    };
    label_jumps(&mut points, opts.jump_ratio);
    Ok(points)
}

/// Appends `#k` to the label after each jump of `sup_u` by more than `ratio`.
fn label_jumps(points: &mut [BranchPoint], ratio: f64) {
    let mut k = 0;
    let mut last: Option<f64> = None;
    for p in points.iter_mut() {
        if !p.converged {
            continue;
        }
        if let Some(prev) = last {
            let r = (p.sup_u / prev).max(prev / p.sup_u);
            if r > ratio {
                k += 1;
            }
        }
        if k > 0 {
            p.branch_id = format!("{}#{k}", p.branch_id);
        }
        last = Some(p.sup_u);
    }
}

/// Errors that mean "no solution found here" rather than a broken setup.
fn recoverable(e: &Error) -> bool {
    matches!(
        e,
        Error::NoSubsolution { .. }
            | Error::NoSupersolution { .. }
            | Error::NoConvergence { .. }
            | Error::MonotonicityViolation { .. }
            | Error::OutOfRange { .. }
            | Error::BranchLost { .. }
    )
}

/// Maximal positive solution for `1 < q < 3`: monotone iteration from the
/// super-solution `K e ≥ Cψ` for a bounded number of steps, polished by
/// Newton. `None` when the iteration collapses onto zero.
pub fn maximal_solution(problem: &Problem, cfg: &SolveConfig) -> Result<Option<SolveReport>> {
    let lower = problem.default_lower_bound(cfg)?;
    let sup = problem.make_supersolution(cfg.lambda, lower.as_deref())?;
    let rep = problem.monotone_iterate_partial(cfg, &sup.field)?;
    if rep.is_positive() {
        return Ok(Some(rep));
    }
    if rep.trivial {
        return Ok(None);
    }
    let polished = problem.newton_solve(cfg, &rep.v)?;
    Ok(if polished.is_positive() { Some(polished) } else { None })
}

/// Newton roots reached from `a φ₁` for `a` on the ladder `2^{k/4}`,
/// `k = k_lo..=k_hi`; positive, converged and distinct in `sup_v` (relative
/// gap `1e-6`), sorted by `sup_v`.
pub fn find_positive_roots(problem: &Problem, lambda: f64, tol: f64, k_lo: i32, k_hi: i32) -> Result<Vec<SolveReport>> {
    require_positive(lambda)?;
    let cfg = SolveConfig::new(lambda).with_tol(tol);
    let limit = problem.transform().s_max();
    let starts: Vec<f64> = (k_lo..=k_hi).map(|k| 2f64.powf(k as f64 / 4.0)).filter(|&a| a < limit).collect();
    let found: Vec<SolveReport> = starts
        .par_iter()
        .map(|&a| problem.newton_solve(&cfg, &problem.phi1().scaled(a)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|r| r.is_positive())
        .collect();
    let mut roots: Vec<SolveReport> = Vec::new();
    for r in found {
        if !roots.iter().any(|x| (x.sup_v - r.sup_v).abs() <= 1e-6 * r.sup_v) {
            roots.push(r);
        }
    }
    roots.sort_by(|a, b| a.sup_v.total_cmp(&b.sup_v));
    Ok(roots)
}

/// Newton continuation along `lambdas` with a tangent predictor
/// `dv/dλ = J⁻¹ g(v)`; a failed step is retried with up to six halvings
/// of the λ-increment.
fn newton_continuation(problem: &Problem, lambdas: &[f64], tol: f64) -> Result<Vec<(f64, Option<SolveReport>)>> {
    let mut out = Vec::with_capacity(lambdas.len());
    let mut current: Option<SolveReport> = None;
    for &lambda in lambdas {
        let next = match &current {
            None => find_positive_roots(problem, lambda, tol, -16, 40)?.into_iter().next(),
            Some(prev) => continue_to(problem, prev, lambda, tol, 6)?,
        };
        if next.is_none() {
            debug!("continuation lost the branch at lambda = {lambda}");
        }
        if let Some(r) = &next {
            current = Some(r.clone());
        }
        out.push((lambda, next));
    }
    Ok(out)
}

/// One continuation step from a converged point to `target`.
pub fn continue_to(problem: &Problem, from: &SolveReport, target: f64, tol: f64, depth: u32) -> Result<Option<SolveReport>> {
    let cfg = SolveConfig::new(target).with_tol(tol);
    let guess = tangent_predictor(problem, from, target)?;
    if let Some(g) = guess {
        let r = problem.newton_solve(&cfg, &g)?;
        if r.is_positive() {
            return Ok(Some(r));
        }
    }
    if depth == 0 {
        return Ok(None);
    }
    let mid = 0.5 * (from.lambda + target);
    match continue_to(problem, from, mid, tol, depth - 1)? {
        Some(m) => continue_to(problem, &m, target, tol, depth - 1),
        None => Ok(None),
    }
}

fn tangent_predictor(problem: &Problem, from: &SolveReport, target: f64) -> Result<Option<Vec<f64>>> {
    let nl = problem.nonlinearity();
    let d: Vec<f64> = from.v.iter().map(|&x| Ok(-from.lambda * nl.g_prime(x)?)).collect::<Result<_>>()?;
    let Ok(lu) = problem.mesh().band(&d).factor() else {
        return Ok(None);
    };
    let mut dv = nl.g_field(&from.v)?;
    lu.solve_in_place(&mut dv);
    let dl = target - from.lambda;
    Ok(Some(from.v.iter().zip(&dv).map(|(v, t)| v + dl * t).collect()))
}

/// Solvability predicate for `1 < q < 3`: Newton from `aφ₁` at the two
/// amplitudes `A/4` and `A` (`A = max Cψ`), then monotone iteration from the
/// super-solution with a fixed budget, polished by Newton.
pub fn probe_between(problem: &Problem, lambda: f64, tol: f64) -> Result<Option<SolveReport>> {
    let cfg = SolveConfig::new(lambda).with_tol(tol).with_max_iter(PROBE_BUDGET);
    if let Some(alpha) = problem.transform().theta().alpha() {
        let (c, psi, _) = problem.apriori_profile(lambda, alpha)?;
        let a = c * psi.max();
        for amp in [0.25 * a, a] {
            let r = problem.newton_solve(&cfg, &problem.phi1().scaled(amp))?;
            if r.is_positive() {
                return Ok(Some(r));
            }
        }
    }
    match maximal_solution(problem, &cfg) {
        Ok(r) => Ok(r),
        Err(e) if recoverable(&e) => Ok(None),
        Err(e) => Err(e),
    }
}

/// λ* for `1 < q < 3` by bisection on solvability to relative width
/// [`BISECTION_RTOL`]. The probe must fail at `lo` and succeed at `hi`.
pub fn find_lambda_star(problem: &Problem, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    let q = problem.q();
    if !(q > 1.0 && q < 3.0) {
        return Err(Error::InvalidArgument(format!("lambda* is defined for 1 < q < 3, got {q}")));
    }
    bisect(lo, hi, |l| Ok(probe_between(problem, l, tol)?.is_some()))
}

/// Bisection on a predicate that is false at `lo` and true at `hi`.
pub fn bisect<P>(mut lo: f64, mut hi: f64, mut solvable: P) -> Result<f64>
where
    P: FnMut(f64) -> Result<bool>,
{
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(Error::InvalidBracket { lo, hi, reason: "need 0 < lo < hi" });
    }
    let a = solvable(lo)?;
    let b = solvable(hi)?;
    match (a, b) {
        (false, true) => {}
        (true, true) => return Err(Error::InvalidBracket { lo, hi, reason: "solvable at both ends" }),
        (false, false) => return Err(Error::InvalidBracket { lo, hi, reason: "unsolvable at both ends" }),
        (true, false) => return Err(Error::InvalidBracket { lo, hi, reason: "solvable below, unsolvable above" }),
    }
    while hi - lo > BISECTION_RTOL * hi {
        let mid = 0.5 * (lo + hi);
        if solvable(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
        debug!("bisection: [{lo}, {hi}]");
    }
    Ok(0.5 * (lo + hi))
}

/// A threshold estimate next to its predicted value.
#[derive(Clone, Debug, PartialEq)]
pub struct ThresholdEstimate {
    pub estimate: f64,
    pub predicted: f64,
    pub relative_error: f64,
}

impl ThresholdEstimate {
    fn new(estimate: f64, predicted: f64) -> Self {
        Self { estimate, predicted, relative_error: (estimate - predicted).abs() / predicted }
    }
}

/// Solvability predicate for `q = 1`: the `εφ₁` certificate exists and, when
/// a super-solution certificate exists too, Newton from it (or monotone
/// iteration from the sub-solution) reaches a positive solution between them.
pub fn probe_linear(problem: &Problem, lambda: f64, tol: f64) -> Result<bool> {
    let sub = match problem.make_subsolution(lambda, crate::solver::DEFAULT_R) {
        Ok(s) => s,
        Err(Error::NoSubsolution { .. }) => return Ok(false),
        Err(e) => return Err(e),
    };
    let sup = match problem.make_supersolution(lambda, Some(&sub)) {
        Ok(s) => s,
        // no upper certificate (e.g. a linear problem): the sub-solution decides
        Err(Error::NoSupersolution { .. }) => return Ok(true),
        Err(e) => return Err(e),
    };
    let cfg = SolveConfig::new(lambda).with_tol(tol).with_max_iter(PROBE_BUDGET);
    let mut rep = problem.newton_solve(&cfg, &sup.field)?;
    if !rep.is_positive() {
        rep = match problem.monotone_iterate(&cfg, &sub) {
            Ok(r) => r,
            Err(e) if recoverable(&e) => return Ok(false),
            Err(e) => return Err(e),
        };
    }
    let slack = 1e-9 * sup.field.sup_norm();
    let between = rep
        .v
        .iter()
        .zip(sub.iter().zip(sup.field.iter()))
        .all(|(&v, (&lo, &hi))| v >= lo - slack && v <= hi + slack);
    Ok(rep.is_positive() && between)
}

/// Existence threshold for `q = 1` by bisection over
/// `[0.5, 2]·θ(0)λ₁`; predicted value `θ(0)λ₁`.
pub fn linear_threshold(problem: &Problem, tol: f64) -> Result<ThresholdEstimate> {
    if problem.q() != 1.0 {
        return Err(Error::InvalidArgument(format!("the linear threshold needs q = 1, got {}", problem.q())));
    }
    let predicted = problem.transform().theta().at_zero() * problem.lambda1();
    let est = bisect(0.5 * predicted, 2.0 * predicted, |l| probe_linear(problem, l, tol))?;
    Ok(ThresholdEstimate::new(est, predicted))
}

/// Branch data of [`bifurcation_from_infinity`].
#[derive(Clone, Debug)]
pub struct BlowupBranch {
    pub threshold: ThresholdEstimate,
    /// `(λ, sup_v)` ordered by increasing amplitude.
    pub points: Vec<(f64, f64)>,
    /// `sup_v` increases while λ decreases along every recorded step.
    pub monotone: bool,
    pub reports: Vec<SolveReport>,
}

/// Newton on `(v, λ)` with the amplitude pinned: `v[node] = amplitude`.
pub fn pinned_solve(problem: &Problem, guess: &[f64], lambda0: f64, node: usize, amplitude: f64, tol: f64) -> Result<SolveReport> {
    let nl = problem.nonlinearity();
    let mut v = guess.to_vec();
    let mut lambda = lambda0;
    for _ in 0..crate::solver::NEWTON_MAX_ITER {
        let f = problem.residual(lambda, &v)?;
        let g = nl.g_field(&v)?;
        let floor = 16.0 * f64::EPSILON * problem.mesh().h().iter().map(|h| 4.0 / (h * h)).sum::<f64>() * norm_inf(&v);
        let pin = v[node] - amplitude;
        if norm_inf(&f) <= (tol * (1.0 + lambda)).max(floor) && pin.abs() <= 1e-12 * amplitude {
            let cfg = SolveConfig::new(lambda).with_tol(tol);
            return problem.newton_solve(&cfg, &v);
        }
        let d: Vec<f64> = v.iter().map(|&x| Ok(-lambda * nl.g_prime(x)?)).collect::<Result<_>>()?;
        let lu = problem
            .mesh()
            .band(&d)
            .factor()
            .map_err(|_| Error::BranchLost { lambda })?;
        // J δv - g δλ = -F,  δv[node] = -pin
        let mut a: Vec<f64> = f.iter().map(|x| -x).collect();
        lu.solve_in_place(&mut a);
        let mut b = g;
        lu.solve_in_place(&mut b);
        if b[node] == 0.0 {
            return Err(Error::BranchLost { lambda });
        }
        let dl = (-pin - a[node]) / b[node];
        for i in 0..v.len() {
            v[i] += a[i] + dl * b[i];
        }
        lambda += dl;
        if !(lambda > 0.0) {
            return Err(Error::BranchLost { lambda });
        }
    }
    Err(Error::BranchLost { lambda })
}

/// `q = 3`: follows the positive branch by amplitude from 1 up to the
/// blow-up floor, then extrapolates `1/sup_v → 0` linearly in λ through the
/// points at amplitudes 500 and 1000. Predicted value `(α²/4)λ₁`.
pub fn bifurcation_from_infinity(problem: &Problem, tol: f64) -> Result<BlowupBranch> {
    if problem.q() != 3.0 {
        return Err(Error::InvalidArgument(format!("bifurcation from infinity needs q = 3, got {}", problem.q())));
    }
    let alpha = problem.transform().theta().alpha().ok_or_else(|| {
        Error::InvalidArgument(format!("{} has no asymptotic constant alpha", problem.transform().theta().name()))
    })?;
    let predicted = alpha * alpha / 4.0 * problem.lambda1();
    let phi = problem.phi1();
    let node = phi.iter().enumerate().fold(0, |best, (i, &x)| if x > phi[best] { i } else { best });
    // amplitudes 1000·2^{-k/2}, k = 20..=0
    let amps: Vec<f64> = (0..=20).rev().map(|k| BLOWUP_FLOOR * 2f64.powf(-(k as f64) / 2.0)).collect();
    let mut v: Vec<f64> = phi.scaled(amps[0]).into_inner();
    let mut lambda = {
        let nl = problem.nonlinearity();
        let lap = problem.mesh().laplacian_apply(&v)?;
        let g = nl.g_field(&v)?;
        problem.mesh().inner(&lap, &v) / problem.mesh().inner(&g, &v)
    };
    let mut reports = Vec::with_capacity(amps.len());
    let mut prev_amp = amps[0];
    for &amp in &amps {
        for x in v.iter_mut() {
            *x *= amp / prev_amp;
        }
        let rep = pinned_solve(problem, &v, lambda, node, amp, tol)?;
        if !rep.is_positive() {
            return Err(Error::BranchLost { lambda: rep.lambda });
        }
        v = rep.v.0.clone();
        lambda = rep.lambda;
        prev_amp = amp;
        reports.push(rep);
    }
    let points: Vec<(f64, f64)> = reports.iter().map(|r| (r.lambda, r.sup_v)).collect();
    let monotone = points.windows(2).all(|w| w[1].1 > w[0].1 && w[1].0 < w[0].0);
    let (l1, s1) = points[points.len() - 3];
    let (l2, s2) = points[points.len() - 1];
    // λ linear in 1/sup_v through both points, evaluated at 1/sup_v = 0
    let slope = (l1 - l2) / (1.0 / s1 - 1.0 / s2);
    let estimate = l2 - slope / s2;
    Ok(BlowupBranch { threshold: ThresholdEstimate::new(estimate, predicted), points, monotone, reports })
}

/// Outcome of [`small_lambda_blowup`].
#[derive(Clone, Debug)]
pub struct BlowupTrend {
    /// Converged points in continuation order (λ decreasing).
    pub reports: Vec<SolveReport>,
    /// `sup_u` strictly increases as λ decreases.
    pub increasing: bool,
    /// `d log sup_v / d log λ` between the end points.
    pub growth_exponent: f64,
}

/// Continues the positive branch from `lambda_start` down to `lambda_end`
/// over `steps` log-spaced values.
pub fn small_lambda_blowup(problem: &Problem, lambda_start: f64, lambda_end: f64, steps: usize, tol: f64) -> Result<BlowupTrend> {
    if problem.q() < 3.0 {
        return Err(Error::InvalidArgument(format!("small-lambda blow-up needs q >= 3, got {}", problem.q())));
    }
    if !(lambda_end > 0.0 && lambda_end < lambda_start) || steps < 2 {
        return Err(Error::InvalidArgument("need 0 < lambda_end < lambda_start and at least 2 steps".into()));
    }
    let lambdas: Vec<f64> = (0..steps)
        .map(|k| lambda_start * (lambda_end / lambda_start).powf(k as f64 / (steps - 1) as f64))
        .collect();
    let path = newton_continuation(problem, &lambdas, tol)?;
    let mut reports = Vec::with_capacity(path.len());
    for (lambda, rep) in path {
        reports.push(rep.ok_or(Error::BranchLost { lambda })?);
    }
    let increasing = reports.windows(2).all(|w| w[1].sup_u > w[0].sup_u);
    let (a, b) = (&reports[0], &reports[reports.len() - 1]);
    let growth_exponent = (b.sup_v / a.sup_v).ln() / (b.lambda / a.lambda).ln();
    Ok(BlowupTrend { reports, increasing, growth_exponent })
}

/// Positive solution of a `q ≥ 3` problem reached from the amplitude ladder:
/// the one with the smallest `sup_v`.
pub fn superlinear_solution(problem: &Problem, lambda: f64, tol: f64) -> Result<Option<SolveReport>> {
    Ok(find_positive_roots(problem, lambda, tol, -16, 40)?.into_iter().next())
}

/// Field-level convenience for callers holding a report.
pub fn sup_ratio(a: &Field, b: &Field) -> f64 {
    a.sup_norm() / b.sup_norm()
}
