//! Solves the dual problem `-Δ_h v = λ g(v)` with zero Dirichlet data.
//!
//! Two solution paths are provided: the monotone sub/super-solution
//! iteration `(-Δ_h + K) v_{n+1} = λ g(v_n) + K v_n`, and a damped Newton
//! method used to reach unstable solutions and to continue branches.

use std::sync::Arc;

use log::debug;

use crate::dual_transform::DualTransform;
use crate::linalg::{norm2, norm_inf, BandLu};
use crate::mesh::{DomainMesh, EigenPair, Field, Torsion};
use crate::nonlinearity::{require_positive, Nonlinearity};
use crate::{Error, Result};

/// Default sup-norm stopping tolerance.
pub const DEFAULT_TOL: f64 = 1e-9;
/// Default iteration cap of the monotone iteration.
pub const DEFAULT_MAX_ITER: usize = 10_000;
/// Default exponent of the `φ₁^r` sub-solution.
pub const DEFAULT_R: f64 = 2.0;
/// Iteration cap of Newton's method.
pub const NEWTON_MAX_ITER: usize = 100;

const DYADIC_EPS_MIN: i32 = -80;
const DYADIC_K_MIN: i32 = -60;
/// Relative slack of node-wise certificate and monotonicity checks.
const NODE_RTOL: f64 = 1e-9;
/// Samples of `g'` when choosing the monotone shift.
const SHIFT_SAMPLES: usize = 1000;

/// Starting point of a solve.
#[derive(Clone, Debug)]
pub enum Start {
    FromSub,
    FromSuper,
    Custom(Field),
}

#[derive(Clone, Debug)]
pub struct SolveConfig {
    pub lambda: f64,
    /// Monotone shift `K`; chosen from `g'` when `None`.
    pub k_shift: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
    /// Exponent of the `φ₁^r` sub-solution for `1 < q < 3`.
    pub r: f64,
}

impl SolveConfig {
    pub fn new(lambda: f64) -> Self {
        Self { lambda, k_shift: None, tol: DEFAULT_TOL, max_iter: DEFAULT_MAX_ITER, r: DEFAULT_R }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_shift(mut self, k: f64) -> Self {
        self.k_shift = Some(k);
        self
    }

    pub fn with_r(mut self, r: f64) -> Self {
        self.r = r;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MonotoneDirection {
    Increasing,
    Decreasing,
    NotApplicable,
}

/// Outcome of one solve.
#[derive(Clone, Debug)]
pub struct SolveReport {
    pub lambda: f64,
    pub v: Field,
    pub u: Field,
    /// `‖-Δ_h v - λ g(v)‖∞`.
    pub residual_sup: f64,
    pub iterations: usize,
    pub sup_v: f64,
    pub sup_u: f64,
    pub energy: f64,
    pub converged: bool,
    pub monotone_direction: MonotoneDirection,
    /// Tolerance the convergence test used: `residual_sup ≤ tol·(1+λ)` when
    /// converged. Raised above the requested value only when round-off in
    /// `-Δ_h v` makes the request unreachable.
    pub tol: f64,
    /// The iterate collapsed onto `v = 0`.
    pub trivial: bool,
    /// Newton met a singular Jacobian.
    pub fold_signal: bool,
}

impl SolveReport {
    /// Converged, nontrivial and positive at every node.
    pub fn is_positive(&self) -> bool {
        self.converged && !self.trivial && self.v.iter().all(|&x| x > 0.0)
    }
}

/// Certificate returned by [`Problem::make_supersolution`].
#[derive(Clone, Debug)]
pub struct SuperSolution {
    pub field: Field,
    pub k: f64,
}

/// Outcome of [`Problem::apriori_bound_check`].
#[derive(Clone, Debug)]
pub struct BoundReport {
    pub c: f64,
    pub psi: Field,
    pub psi_residual: f64,
    /// `min(Cψ - v)` over the nodes.
    pub margin: f64,
    pub slack: f64,
    pub holds: bool,
}

/// The discrete problem on a fixed mesh and nonlinearity, with the principal
/// eigenpair and torsion function computed once.
#[derive(Clone, Debug)]
pub struct Problem {
    mesh: DomainMesh,
    nl: Nonlinearity,
    eigen: EigenPair,
    torsion: Torsion,
}

impl Problem {
    pub fn new(mesh: DomainMesh, nl: Nonlinearity) -> Result<Self> {
        let eigen = mesh.principal_eigenpair(1)?;
        let torsion = mesh.torsion_function()?;
        Ok(Self { mesh, nl, eigen, torsion })
    }

    /// Same mesh, eigenpair and torsion with another nonlinearity.
    pub fn with_nonlinearity(&self, nl: Nonlinearity) -> Self {
        Self { nl, ..self.clone() }
    }

    pub fn mesh(&self) -> &DomainMesh {
        &self.mesh
    }

    pub fn nonlinearity(&self) -> &Nonlinearity {
        &self.nl
    }

    pub fn transform(&self) -> &Arc<DualTransform> {
        self.nl.transform()
    }

    pub fn q(&self) -> f64 {
        self.nl.q()
    }

    pub fn lambda1(&self) -> f64 {
        self.eigen.value
    }

    pub fn phi1(&self) -> &Field {
        &self.eigen.vector
    }

    pub fn eigenpair(&self) -> &EigenPair {
        &self.eigen
    }

    pub fn torsion(&self) -> &Torsion {
        &self.torsion
    }

    /// `-Δ_h v - λ g(v)`.
    pub fn residual(&self, lambda: f64, v: &[f64]) -> Result<Field> {
        let mut r = self.mesh.laplacian_apply(v)?;
        for (ri, &vi) in r.iter_mut().zip(v) {
            *ri -= lambda * self.nl.g(vi)?;
        }
        Ok(r)
    }

    /// Per-node magnitude that certificate comparisons are relative to.
    fn node_scale(&self, lambda: f64, v: &[f64], lap: &[f64]) -> Result<Vec<f64>> {
        v.iter()
            .zip(lap)
            .map(|(&x, &l)| Ok(l.abs() + (lambda * self.nl.g(x)?).abs()))
            .collect()
    }

    /// `-Δ_h w ≤ λ g(w)` node-wise, up to relative round-off.
    fn is_subsolution(&self, lambda: f64, w: &[f64]) -> Result<bool> {
        let lap = self.mesh.laplacian_apply(w)?;
        let scale = self.node_scale(lambda, w, &lap)?;
        for i in 0..w.len() {
            if lap[i] - lambda * self.nl.g(w[i])? > NODE_RTOL * scale[i] {
                return Ok(false);
            }
        }
        Ok(true)
    }

    fn is_supersolution(&self, lambda: f64, w: &[f64]) -> Result<bool> {
        let lap = self.mesh.laplacian_apply(w)?;
        let scale = self.node_scale(lambda, w, &lap)?;
        for i in 0..w.len() {
            if lap[i] - lambda * self.nl.g(w[i])? < -NODE_RTOL * scale[i] {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Sub-solution certificate: `εφ₁` (largest dyadic `ε ≤ 1`) for `q ≤ 1`,
    /// `φ₁^r` for `1 < q < 3`. Verified node-wise against the discrete
    /// operator.
    pub fn make_subsolution(&self, lambda: f64, r: f64) -> Result<Field> {
        require_positive(lambda)?;
        let q = self.q();
        let phi = self.phi1();
        if q <= 1.0 {
            for j in 0..=(-DYADIC_EPS_MIN) {
                let eps = 2f64.powi(-j);
                let w = phi.scaled(eps);
                // λ₁ ε φ₁ ≤ λ g(ε φ₁)
                let mut ok = true;
                for &x in w.iter() {
                    let lhs = self.lambda1() * x;
                    let rhs = lambda * self.nl.g(x)?;
                    if lhs - rhs > NODE_RTOL * (lhs.abs() + rhs.abs()) {
                        ok = false;
                        break;
                    }
                }
                if ok && self.is_subsolution(lambda, &w)? {
                    debug!("sub-solution: eps = 2^-{j}");
                    return Ok(w);
                }
            }
            Err(Error::NoSubsolution { lambda, q })
        } else if q < 3.0 {
            if !(r > 1.0 && r.is_finite()) {
                return Err(Error::InvalidArgument(format!("sub-solution exponent r must exceed 1, got {r}")));
            }
            let w = phi.map(|x| x.powf(r));
            if self.is_subsolution(lambda, &w)? {
                Ok(w)
            } else {
                Err(Error::NoSubsolution { lambda, q })
            }
        } else {
            Err(Error::InvalidArgument(format!("no sub-solution construction for q = {q} >= 3")))
        }
    }

    /// Super-solution certificate `K e` with `e` the torsion function of the
    /// padded domain: `K` is the smallest power of two such that every
    /// dyadic `K' ≥ K` up to the table extent satisfies
    /// `e_M g(K' e_L)/(K' e_L) ≤ 1/λ` and `K' ≥ λ g(K' e)` node-wise, and
    /// `K e ≥ lower`.
    pub fn make_supersolution(&self, lambda: f64, lower: Option<&[f64]>) -> Result<SuperSolution> {
        require_positive(lambda)?;
        if let Some(l) = lower {
            self.mesh.check(l)?;
        }
        let q = self.q();
        let t = &self.torsion;
        let top = (self.transform().s_max() / t.e_m).log2().floor() as i32;
        let admissible = |k: f64| -> Result<bool> {
            if t.e_m * self.nl.g(k * t.e_l)? / (k * t.e_l) > 1.0 / lambda {
                return Ok(false);
            }
            for &e in t.e.iter() {
                if k < lambda * self.nl.g(k * e)? {
                    return Ok(false);
                }
            }
            Ok(true)
        };
        let above = |k: f64| match lower {
            Some(l) => t.e.iter().zip(l).all(|(&e, &lo)| k * e >= lo),
            None => true,
        };
        let mut best = None;
        let mut j = top;
        while j >= DYADIC_K_MIN {
            let k = 2f64.powi(j);
            if !above(k) || !admissible(k)? {
                break;
            }
            best = Some(k);
            j -= 1;
        }
        match best {
            Some(k) => {
                let field = t.e.scaled(k);
                if !self.is_supersolution(lambda, &field)? {
                    return Err(Error::NoSupersolution { lambda, q });
                }
                debug!("super-solution: K = {k:e}");
                Ok(SuperSolution { field, k })
            }
            None => Err(Error::NoSupersolution { lambda, q }),
        }
    }

    /// `K = λ·max(0, -min g')·1.1` over `(0, m]`.
    fn auto_shift(&self, lambda: f64, m: f64) -> Result<f64> {
        if !(m > 0.0) {
            return Ok(0.0);
        }
        let mut worst: f64 = 0.0;
        for k in 1..=SHIFT_SAMPLES {
            let lin = m * k as f64 / SHIFT_SAMPLES as f64;
            let log = m * 10f64.powf(-12.0 * (1.0 - k as f64 / SHIFT_SAMPLES as f64));
            for s in [lin, log] {
                let d = self.nl.g_prime(s)?;
                worst = worst.min(d);
            }
        }
        Ok(lambda * (-worst).max(0.0) * 1.1)
    }

    fn factor_shifted(&self, k: f64) -> Result<BandLu> {
        let d = vec![k; self.mesh.len()];
        self.mesh
            .band(&d)
            .factor()
            .map_err(|p| Error::InvariantFailure { what: "shifted Laplacian singular", margin: p.pivot })
    }

    /// Monotone iteration from a verified sub- or super-solution `v0`.
    pub fn monotone_iterate(&self, cfg: &SolveConfig, v0: &[f64]) -> Result<SolveReport> {
        self.monotone_run(cfg, v0, false)
    }

    /// As [`Problem::monotone_iterate`], but an exhausted budget returns the
    /// last iterate with `converged = false` instead of an error.
    pub fn monotone_iterate_partial(&self, cfg: &SolveConfig, v0: &[f64]) -> Result<SolveReport> {
        self.monotone_run(cfg, v0, true)
    }

    fn monotone_run(&self, cfg: &SolveConfig, v0: &[f64], partial: bool) -> Result<SolveReport> {
        let lambda = cfg.lambda;
        require_positive(lambda)?;
        self.mesh.check(v0)?;
        let direction = if self.is_subsolution(lambda, v0)? {
            MonotoneDirection::Increasing
        } else if self.is_supersolution(lambda, v0)? {
            MonotoneDirection::Decreasing
        } else {
            return Err(Error::InvalidArgument("starting field is neither a sub- nor a super-solution".into()));
        };
        let sup0 = norm_inf(v0);
        let mut bound = sup0;
        if cfg.k_shift.is_none() && direction == MonotoneDirection::Increasing {
            // iterates from below stay under any super-solution above v0
            if let Ok(upper) = self.make_supersolution(lambda, Some(v0)) {
                bound = bound.max(upper.field.sup_norm());
            }
        }
        let mut k = match cfg.k_shift {
            Some(k) if k >= 0.0 => k,
            Some(k) => return Err(Error::InvalidArgument(format!("shift K must be nonnegative, got {k}"))),
            None => self.auto_shift(lambda, bound)?,
        };
        let mut lu = self.factor_shifted(k)?;
        let mut v = v0.to_vec();
        let mut rhs = vec![0.0; v.len()];
        let mut converged = false;
        let mut trivial = false;
        let mut iterations = 0;
        for it in 1..=cfg.max_iter {
            iterations = it;
            for i in 0..v.len() {
                rhs[i] = lambda * self.nl.g(v[i])? + k * v[i];
            }
            lu.solve_in_place(&mut rhs);
            let next = std::mem::replace(&mut rhs, vec![0.0; v.len()]);
            let scale = norm_inf(&next).max(norm_inf(&v));
            let mut step: f64 = 0.0;
            for (i, (&a, &b)) in v.iter().zip(&next).enumerate() {
                let d = b - a;
                let wrong = match direction {
                    MonotoneDirection::Increasing => -d,
                    _ => d,
                };
                if wrong > NODE_RTOL * scale + f64::MIN_POSITIVE {
                    return Err(Error::MonotonicityViolation { iteration: it, node: i, amount: wrong });
                }
                step = step.max(d.abs());
            }
            v = next;
            let sup = norm_inf(&v);
            if sup < 1e-12 * sup0 {
                trivial = true;
                break;
            }
            if cfg.k_shift.is_none() && sup > bound * 1.5 {
                bound = sup;
                let k_new = self.auto_shift(lambda, bound)?;
                if k_new > k {
                    k = k_new;
                    lu = self.factor_shifted(k)?;
                }
            }
            if step <= cfg.tol * sup {
                let res = norm_inf(&self.residual(lambda, &v)?);
                if res <= cfg.tol * (1.0 + lambda) {
                    converged = true;
                    break;
                }
                if step == 0.0 {
                    break;
                }
            }
        }
        let mut report = self.report(lambda, Field(v), iterations, cfg.tol, direction)?;
        report.trivial |= trivial || report.sup_v == 0.0;
        report.converged = converged && report.residual_sup <= cfg.tol * (1.0 + lambda);
        if !partial && !report.converged && !report.trivial && iterations >= cfg.max_iter {
            return Err(Error::NoConvergence { method: "monotone iteration", iterations, residual: report.residual_sup });
        }
        Ok(report)
    }

    /// Residual level that round-off in `-Δ_h v` alone can produce.
    fn roundoff_floor(&self, v: &[f64]) -> f64 {
        let stencil: f64 = self.mesh.h().iter().map(|h| 4.0 / (h * h)).sum();
        16.0 * f64::EPSILON * stencil * norm_inf(v)
    }

    /// Damped Newton on `F(v) = -Δ_h v - λ g(v)` with Jacobian
    /// `-Δ_h - λ diag(g'(v))`. The step is halved until `‖F‖₂` decreases.
    ///
    /// Does not fail on a singular Jacobian or an exhausted iteration budget:
    /// the report says `converged = false` (and `fold_signal` for the former).
    pub fn newton_solve(&self, cfg: &SolveConfig, v0: &[f64]) -> Result<SolveReport> {
        let lambda = cfg.lambda;
        require_positive(lambda)?;
        self.mesh.check(v0)?;
        if self.q() < 1.0 {
            return Err(Error::InvalidArgument(format!(
                "Newton needs a bounded g' near 0 (q >= 1), got q = {}",
                self.q()
            )));
        }
        let max_iter = cfg.max_iter.min(NEWTON_MAX_ITER);
        let sup0 = norm_inf(v0).max(f64::MIN_POSITIVE);
        let mut v = v0.to_vec();
        let mut f = self.residual(lambda, &v)?;
        let mut fnorm = norm2(&f);
        let mut fold = false;
        let mut converged = false;
        let mut iterations = 0;
        let mut tol = cfg.tol;
        for it in 0..=max_iter {
            tol = cfg.tol.max(self.roundoff_floor(&v) / (1.0 + lambda));
            if norm_inf(&f) <= tol * (1.0 + lambda) {
                converged = true;
                break;
            }
            if it == max_iter {
                break;
            }
            iterations = it + 1;
            let d: Vec<f64> = v.iter().map(|&x| Ok(-lambda * self.nl.g_prime(x)?)).collect::<Result<_>>()?;
            let lu = match self.mesh.band(&d).factor() {
                Ok(lu) => lu,
                Err(p) => {
                    debug!("newton: singular Jacobian at row {} (pivot {:e})", p.row, p.pivot);
                    fold = true;
                    break;
                }
            };
            let mut delta = f.clone();
            lu.solve_in_place(&mut delta);
            let mut alpha = 1.0;
            let mut accepted = false;
            for _ in 0..40 {
                let trial: Vec<f64> = v.iter().zip(delta.iter()).map(|(a, b)| a - alpha * b).collect();
                match self.residual(lambda, &trial) {
                    Ok(ft) => {
                        let n = norm2(&ft);
                        if n.is_finite() && n < (1.0 - 1e-4 * alpha) * fnorm {
                            v = trial;
                            f = ft;
                            fnorm = n;
                            accepted = true;
                            break;
                        }
                    }
                    Err(Error::OutOfRange { .. }) | Err(Error::NonFinite { .. }) => {}
                    Err(e) => return Err(e),
                }
                alpha *= 0.5;
            }
            if !accepted {
                // at a round-off floor the residual cannot decrease further
                let floor = self.roundoff_floor(&v);
                if norm_inf(&f) <= 4.0 * floor {
                    tol = tol.max(norm_inf(&f) / (1.0 + lambda));
                    converged = true;
                }
                break;
            }
        }
        let mut report = self.report(lambda, Field(v), iterations, tol, MonotoneDirection::NotApplicable)?;
        report.converged = converged && report.residual_sup <= tol * (1.0 + lambda);
        report.fold_signal = fold;
        report.trivial |= report.sup_v <= 1e-10 * sup0;
        Ok(report)
    }

    /// Runs the solver appropriate to `start`: monotone iteration from a
    /// certificate, or Newton (monotone iteration for `q < 1`) from a custom
    /// field.
    pub fn solve(&self, cfg: &SolveConfig, start: Start) -> Result<SolveReport> {
        require_positive(cfg.lambda)?;
        match start {
            Start::FromSub => {
                let sub = self.make_subsolution(cfg.lambda, cfg.r)?;
                self.monotone_iterate(cfg, &sub)
            }
            Start::FromSuper => {
                let lower = self.default_lower_bound(cfg)?;
                let sup = self.make_supersolution(cfg.lambda, lower.as_deref())?;
                self.monotone_iterate(cfg, &sup.field)
            }
            Start::Custom(v0) => {
                if self.q() < 1.0 {
                    self.monotone_iterate(cfg, &v0)
                } else {
                    self.newton_solve(cfg, &v0)
                }
            }
        }
    }

    /// Field a super-solution must dominate so that iteration from it reaches
    /// the maximal solution: the sub-solution for `q ≤ 1`, `Cψ` for
    /// `1 < q < 3`.
    pub fn default_lower_bound(&self, cfg: &SolveConfig) -> Result<Option<Vec<f64>>> {
        let q = self.q();
        if q <= 1.0 {
            Ok(self.make_subsolution(cfg.lambda, cfg.r).ok().map(Field::into_inner))
        } else if q < 3.0 {
            match self.transform().theta().alpha() {
                Some(alpha) => {
                    let (c, psi, _) = self.apriori_profile(cfg.lambda, alpha)?;
                    Ok(Some(psi.iter().map(|p| c * p).collect()))
                }
                None => Ok(None),
            }
        } else {
            Ok(None)
        }
    }

    fn report(
        &self,
        lambda: f64,
        v: Field,
        iterations: usize,
        tol: f64,
        direction: MonotoneDirection,
    ) -> Result<SolveReport> {
        let residual_sup = norm_inf(&self.residual(lambda, &v)?);
        let u = recover_u(self.transform(), &v)?;
        let energy = self.energy(lambda, &v)?;
        // the zero field would pass the same residual test
        let trivial = norm_inf(&self.mesh.laplacian_apply(&v)?) <= tol * (1.0 + lambda);
        Ok(SolveReport {
            lambda,
            sup_v: v.sup_norm(),
            sup_u: u.sup_norm(),
            v,
            u,
            residual_sup,
            iterations,
            energy,
            converged: false,
            monotone_direction: direction,
            tol,
            trivial,
            fold_signal: false,
        })
    }

    /// `I(v) = ½⟨-Δ_h v, v⟩_h - λ h^d Σ G(v)`.
    pub fn energy(&self, lambda: f64, v: &[f64]) -> Result<f64> {
        let lap = self.mesh.laplacian_apply(v)?;
        let mut pot = 0.0;
        for &x in v {
            pot += self.nl.G(x)?;
        }
        Ok(0.5 * self.mesh.inner(&lap, v) - lambda * self.mesh.cell_volume() * pot)
    }

    /// Riesz representative of `I'(v)` under `⟨a, b⟩_h = h^d Σ aᵢbᵢ`, so
    /// that `I'(v)w = ⟨gradient, w⟩_h`. Equals `-Δ_h v - λ g(v)`.
    pub fn energy_gradient(&self, lambda: f64, v: &[f64]) -> Result<Field> {
        self.residual(lambda, v)
    }

    /// Smallest eigenvalue `μ₁` of `-Δ_h - λ diag(g'(v))` and its sign
    /// (`+1` stable, `-1` unstable, `0` within `1e-9·λ₁` of zero).
    pub fn stability(&self, lambda: f64, v: &[f64]) -> Result<(i8, f64)> {
        let d: Vec<f64> = v.iter().map(|&x| Ok(-lambda * self.nl.g_prime(x)?)).collect::<Result<_>>()?;
        let (mu, _) = self.mesh.smallest_eigenvalue(&d)?;
        let eps = 1e-9 * self.lambda1();
        let sign = if mu > eps {
            1
        } else if mu < -eps {
            -1
        } else {
            0
        };
        Ok((sign, mu))
    }

    /// `C` and `ψ` of the a-priori bound `v ≤ Cψ` for `1 < q < 3`, where
    /// `-Δψ = ψ^{(q-1)/2}` and `C = λ^{2/(3-q)} (8/α²)^{(q+1)/(2(3-q))}`.
    /// Also returns `‖-Δ_h ψ - ψ^{(q-1)/2}‖∞`.
    pub fn apriori_profile(&self, lambda: f64, alpha: f64) -> Result<(f64, Field, f64)> {
        let q = self.q();
        if !(q > 1.0 && q < 3.0) {
            return Err(Error::InvalidArgument(format!("the a-priori bound needs 1 < q < 3, got {q}")));
        }
        let c = lambda.powf(2.0 / (3.0 - q)) * (8.0 / (alpha * alpha)).powf((q + 1.0) / (2.0 * (3.0 - q)));
        let psi = self.auxiliary_psi((q - 1.0) / 2.0)?;
        let mut res = self.mesh.laplacian_apply(&psi)?;
        for (r, &p) in res.iter_mut().zip(psi.iter()) {
            *r -= p.max(0.0).powf((q - 1.0) / 2.0);
        }
        Ok((c, psi, norm_inf(&res)))
    }

    /// Positive solution of `-Δ_h w = w^p`, `0 < p < 1`, by monotone
    /// iteration from the super-solution `K e_Ω`, `K = max(e_Ω)^{p/(1-p)}`.
    fn auxiliary_psi(&self, p: f64) -> Result<Field> {
        let ones = vec![1.0; self.mesh.len()];
        let e = self.mesh.solve_shifted_poisson(&ones, 0.0, None)?;
        let k = e.max().powf(p / (1.0 - p)) * 1.01;
        let lu = self.factor_shifted(0.0)?;
        let mut w = e.scaled(k).into_inner();
        for it in 1..=DEFAULT_MAX_ITER {
            let mut next: Vec<f64> = w.iter().map(|x| x.max(0.0).powf(p)).collect();
            lu.solve_in_place(&mut next);
            let step = w.iter().zip(&next).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            w = next;
            if step <= 1e-13 * norm_inf(&w) {
                debug!("psi: {it} iterations");
                return Ok(Field(w));
            }
        }
        Err(Error::NoConvergence { method: "auxiliary problem", iterations: DEFAULT_MAX_ITER, residual: f64::NAN })
    }

    /// Checks `v ≤ Cψ + 10 h² ‖v‖∞` node-wise for a converged positive
    /// solution.
    pub fn apriori_bound_check(&self, report: &SolveReport) -> Result<BoundReport> {
        if !report.converged {
            return Err(Error::InvalidArgument("the a-priori bound applies to converged solutions".into()));
        }
        let alpha = self.transform().theta().alpha().ok_or_else(|| {
            Error::InvalidArgument("the a-priori bound needs the asymptotic constant alpha".into())
        })?;
        let (c, psi, psi_residual) = self.apriori_profile(report.lambda, alpha)?;
        let h = self.mesh.h_max();
        let slack = 10.0 * h * h * report.sup_v;
        let margin = psi
            .iter()
            .zip(report.v.iter())
            .map(|(p, v)| c * p - v)
            .fold(f64::INFINITY, f64::min);
        let holds = margin >= -slack;
        if !holds {
            return Err(Error::InvariantFailure { what: "a-priori bound v <= C psi", margin });
        }
        Ok(BoundReport { c, psi, psi_residual, margin, slack, holds })
    }
}

/// `u = f(v)` node-wise.
pub fn recover_u(transform: &DualTransform, v: &[f64]) -> Result<Field> {
    v.iter().map(|&x| transform.f_eval(x)).collect::<Result<Vec<_>>>().map(Field)
}

/// `v = f⁻¹(u)` node-wise.
pub fn invert_u(transform: &DualTransform, u: &[f64]) -> Result<Field> {
    u.iter().map(|&x| transform.f_inverse(x)).collect::<Result<Vec<_>>>().map(Field)
}

/// Centered-difference check of `I'(v)w = ⟨gradient, w⟩_h` along
/// `w = v/‖v‖∞` at steps `τ‖v‖∞` and `τ‖v‖∞/2`.
#[derive(Clone, Copy, Debug)]
pub struct DirectionalCheck {
    pub derivative: f64,
    pub error_coarse: f64,
    pub error_fine: f64,
    /// `log2(error_coarse/error_fine)`; infinite when both errors sit at
    /// round-off (the functional is quadratic along `w`).
    pub order: f64,
}

impl Problem {
    pub fn directional_check(&self, lambda: f64, v: &[f64], tau: f64) -> Result<DirectionalCheck> {
        let sup = norm_inf(v);
        if !(sup > 0.0) {
            return Err(Error::InvalidArgument("directional check needs a nonzero field".into()));
        }
        let w: Vec<f64> = v.iter().map(|x| x / sup).collect();
        let grad = self.energy_gradient(lambda, v)?;
        let exact = self.mesh.inner(&grad, &w);
        let central = |t: f64| -> Result<f64> {
            let plus: Vec<f64> = v.iter().zip(&w).map(|(a, b)| a + t * b).collect();
            let minus: Vec<f64> = v.iter().zip(&w).map(|(a, b)| a - t * b).collect();
            Ok((self.energy(lambda, &plus)? - self.energy(lambda, &minus)?) / (2.0 * t))
        };
        let t = tau * sup;
        let e1 = (central(t)? - exact).abs();
        let e2 = (central(0.5 * t)? - exact).abs();
        let i0 = self.energy(lambda, v)?.abs().max(self.mesh.inner(v, v).abs());
        let noise = 1e3 * f64::EPSILON * i0 / t;
        let order = if e1 <= noise && e2 <= 2.0 * noise { f64::INFINITY } else { (e1 / e2).log2() };
        Ok(DirectionalCheck { derivative: exact, error_coarse: e1, error_fine: e2, order })
    }
}
