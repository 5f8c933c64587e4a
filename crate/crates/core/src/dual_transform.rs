//! The change of variable `f`: the odd solution of `f' = θ(f)^{-1/2}`,
//! `f(0) = 0`, built as the inverse of Υ(t) = ∫₀ᵗ θ^{1/2}.
//!
//! The table is laid out in the `t = f(s)` variable, where Υ is an integral
//! that quadrature can evaluate directly. Node positions start geometric and
//! are bisected wherever the interpolant's ODE residual exceeds the
//! requested tolerance.

use std::sync::atomic::{AtomicBool, Ordering};

use log::warn;

use crate::quadrature::{integrate, upsilon};
use crate::theta::ThetaSpec;
use crate::{Error, Result};

/// Default table extent in `s`.
pub const DEFAULT_S_MAX: f64 = 1e6;
/// Default construction tolerance on the ODE residual.
pub const DEFAULT_TOL: f64 = 1e-10;

const FIRST_NODE: f64 = 1e-9;
const INITIAL_RATIO: f64 = 1.1;
const MAX_PASSES: usize = 40;
const MAX_NODES: usize = 4_000_000;
/// Interior verification points per table interval (4× finer grid).
const PROBES: [f64; 3] = [0.25, 0.5, 0.75];

/// Table extent for a solve whose sup-norm is expected to stay below `bound`.
pub fn auto_extent(bound: f64) -> f64 {
    if bound.is_finite() {
        DEFAULT_S_MAX.max(10.0 * bound)
    } else {
        DEFAULT_S_MAX
    }
}

/// Tabulated `f` with its inverse. Immutable after [`DualTransform::build`].
#[derive(Debug)]
pub struct DualTransform {
    theta: ThetaSpec,
    /// Υ(tᵢ), strictly increasing, s[0] = 0.
    s: Vec<f64>,
    /// f(sᵢ) = tᵢ, strictly increasing, t[0] = 0.
    t: Vec<f64>,
    /// θ(tᵢ)^{1/2} = 1/f'(sᵢ).
    root: Vec<f64>,
    s_max: f64,
    tol: f64,
    achieved: f64,
    asymptotic: bool,
    warned: AtomicBool,
}

impl Clone for DualTransform {
    fn clone(&self) -> Self {
        Self {
            theta: self.theta.clone(),
            s: self.s.clone(),
            t: self.t.clone(),
            root: self.root.clone(),
            s_max: self.s_max,
            tol: self.tol,
            achieved: self.achieved,
            asymptotic: self.asymptotic,
            warned: AtomicBool::new(self.warned.load(Ordering::Relaxed)),
        }
    }
}

/// Builds the transform for `theta` covering `[-s_max, s_max]`.
pub fn build_transform(theta: ThetaSpec, s_max: f64, tol: f64) -> Result<DualTransform> {
    DualTransform::build(theta, s_max, tol)
}

#[derive(Clone, Copy)]
struct Node {
    t: f64,
    s: f64,
    root: f64,
}

impl DualTransform {
    /// Tabulates `f` on `[0, s_max]` so that the interpolant satisfies
    /// `|P'(s) θ(P(s))^{1/2} - 1| ≤ tol` on a grid four times finer than the
    /// table.
    pub fn build(theta: ThetaSpec, s_max: f64, tol: f64) -> Result<Self> {
        if !(s_max > 0.0 && s_max.is_finite()) {
            return Err(Error::InvalidArgument(format!("s_max must be positive, got {s_max}")));
        }
        if !(tol > 0.0 && tol <= 1e-4) {
            return Err(Error::InvalidArgument(format!("tol must lie in (0, 1e-4], got {tol}")));
        }
        let root_at = |t: f64| -> Result<f64> {
            let v = theta.eval(t);
            if !v.is_finite() || v < 1.0 {
                return Err(Error::NonFinite { at: t, value: v });
            }
            Ok(v.sqrt())
        };
        let piece = |a: f64, b: f64| integrate(|r| theta.eval(r).sqrt(), a, b, 1e-14, 0.0);

        let mut nodes = vec![Node { t: 0.0, s: 0.0, root: root_at(0.0)? }];
        let mut t = FIRST_NODE;
        loop {
            let prev = *nodes.last().expect("nonempty");
            let s = prev.s + piece(prev.t, t)?;
            nodes.push(Node { t, s, root: root_at(t)? });
            if s >= s_max {
                break;
            }
            t *= INITIAL_RATIO;
            if !t.is_finite() {
                return Err(Error::NonFinite { at: t, value: t });
            }
        }

        let mut achieved = f64::INFINITY;
        for _pass in 0..MAX_PASSES {
            let mut refined = Vec::with_capacity(nodes.len() * 2);
            refined.push(nodes[0]);
            let mut worst: f64 = 0.0;
            let mut split_any = false;
            for w in nodes.windows(2) {
                let (a, b) = (w[0], w[1]);
                let r = interval_residual(&theta, a, b);
                worst = worst.max(r);
                if r > tol && (b.t - a.t) > 4.0 * f64::EPSILON * b.t {
                    let tm = 0.5 * (a.t + b.t);
                    let sm = a.s + piece(a.t, tm)?;
                    refined.push(Node { t: tm, s: sm, root: root_at(tm)? });
                    split_any = true;
                }
                refined.push(b);
            }
            achieved = worst;
            if worst <= tol {
                break;
            }
            if !split_any || refined.len() > MAX_NODES {
                return Err(Error::Construction { achieved: worst, tol });
            }
            nodes = refined;
        }
        if achieved > tol {
            return Err(Error::Construction { achieved, tol });
        }

        let mut tr = Self {
            theta,
            s: nodes.iter().map(|n| n.s).collect(),
            t: nodes.iter().map(|n| n.t).collect(),
            root: nodes.iter().map(|n| n.root).collect(),
            s_max,
            tol,
            achieved,
            asymptotic: false,
            warned: AtomicBool::new(false),
        };
        tr.check_monotone()?;
        // the last node may overshoot s_max; keep what we paid for
        tr.s_max = *tr.s.last().expect("nonempty");
        Ok(tr)
    }

    /// Builds with the default extent and tolerance.
    pub fn with_defaults(theta: ThetaSpec) -> Result<Self> {
        Self::build(theta, DEFAULT_S_MAX, DEFAULT_TOL)
    }

    /// Enables the `l√s` tail beyond the table, `l = (8/α²)^{1/4}`. Requires α.
    pub fn with_asymptotic_tail(mut self, on: bool) -> Result<Self> {
        if on && self.theta.alpha().is_none() {
            return Err(Error::InvalidArgument(format!(
                "asymptotic tail needs alpha, which {} does not have",
                self.theta.name()
            )));
        }
        self.asymptotic = on;
        Ok(self)
    }

    fn check_monotone(&self) -> Result<()> {
        for k in 1..self.s.len() {
            if !(self.s[k] > self.s[k - 1] && self.t[k] > self.t[k - 1]) {
                return Err(Error::InvariantFailure {
                    what: "transform table not strictly increasing",
                    margin: self.s[k] - self.s[k - 1],
                });
            }
        }
        Ok(())
    }

    pub fn theta(&self) -> &ThetaSpec {
        &self.theta
    }

    /// Tabulated extent in `s` (at least the requested `s_max`).
    pub fn s_max(&self) -> f64 {
        self.s_max
    }

    /// `f(s_max)`, the largest tabulated `|u|`.
    pub fn u_max(&self) -> f64 {
        *self.t.last().expect("nonempty")
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    /// Worst ODE residual measured during construction.
    pub fn achieved_residual(&self) -> f64 {
        self.achieved
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    /// Table nodes `(sᵢ, f(sᵢ))` on `[0, s_max]`.
    pub fn nodes(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.s.iter().copied().zip(self.t.iter().copied())
    }

    fn tail_constant(&self) -> Option<f64> {
        self.theta.alpha().map(|a| (8.0 / (a * a)).powf(0.25))
    }

    fn warn_tail(&self) {
        if !self.warned.swap(true, Ordering::Relaxed) {
            warn!(
                "transform for {} evaluated beyond s_max = {:.3e}; using the asymptotic tail",
                self.theta.name(),
                self.s_max
            );
        }
    }

    fn locate(table: &[f64], x: f64) -> usize {
        let i = table.partition_point(|&v| v <= x);
        i.clamp(1, table.len() - 1) - 1
    }

    /// Hermite data of the interval containing `a ≥ 0`: value and derivative
    /// of `f` at `a`.
    fn forward(&self, a: f64) -> (f64, f64) {
        let i = Self::locate(&self.s, a);
        let (s0, s1) = (self.s[i], self.s[i + 1]);
        let (t0, t1) = (self.t[i], self.t[i + 1]);
        let (m0, m1) = (1.0 / self.root[i], 1.0 / self.root[i + 1]);
        hermite(s0, s1, t0, t1, m0, m1, a)
    }

    fn check_range(&self, s: f64) -> Result<bool> {
        if !s.is_finite() {
            return Err(Error::NonFinite { at: s, value: s });
        }
        if s.abs() <= self.s_max {
            Ok(true)
        } else if self.asymptotic {
            self.warn_tail();
            Ok(false)
        } else {
            Err(Error::OutOfRange { value: s, limit: self.s_max })
        }
    }

    /// `f(s)` by monotone cubic interpolation, reflected oddly for `s < 0`.
    pub fn f_eval(&self, s: f64) -> Result<f64> {
        let a = s.abs();
        let mag = if self.check_range(s)? {
            self.forward(a).0
        } else {
            self.tail_constant().expect("checked at construction") * a.sqrt()
        };
        Ok(mag.copysign(s))
    }

    /// `f'(s) = θ(f(s))^{-1/2}`.
    pub fn f_prime(&self, s: f64) -> Result<f64> {
        let u = self.f_eval(s)?;
        Ok(1.0 / self.theta.eval(u).sqrt())
    }

    /// `f''(s) = -θ'(f(s)) / (2 θ(f(s))²)`.
    pub fn f_second(&self, s: f64) -> Result<f64> {
        let u = self.f_eval(s)?;
        let th = self.theta.eval(u);
        Ok(-self.theta.deriv(u) / (2.0 * th * th))
    }

    /// `f(s)` and `f'(s)` with a single table lookup.
    pub fn f_and_prime(&self, s: f64) -> Result<(f64, f64)> {
        let u = self.f_eval(s)?;
        Ok((u, 1.0 / self.theta.eval(u).sqrt()))
    }

    /// `f⁻¹(u)` by monotone cubic interpolation of the table read backwards.
    pub fn f_inverse(&self, u: f64) -> Result<f64> {
        if !u.is_finite() {
            return Err(Error::NonFinite { at: u, value: u });
        }
        let b = u.abs();
        let mag = if b <= self.u_max() {
            let i = Self::locate(&self.t, b);
            hermite(
                self.t[i],
                self.t[i + 1],
                self.s[i],
                self.s[i + 1],
                self.root[i],
                self.root[i + 1],
                b,
            )
            .0
        } else if self.asymptotic {
            self.warn_tail();
            let l = self.tail_constant().expect("checked at construction");
            (b / l).powi(2)
        } else {
            return Err(Error::OutOfRange { value: u, limit: self.u_max() });
        };
        Ok(mag.copysign(u))
    }

    /// `|P'(s) θ(P(s))^{1/2} - 1|` for the interpolant `P`.
    pub fn ode_residual(&self, s: f64) -> Result<f64> {
        let a = s.abs();
        if !self.check_range(s)? {
            return Err(Error::OutOfRange { value: s, limit: self.s_max });
        }
        let (p, dp) = self.forward(a);
        Ok((dp * self.theta.eval(p).sqrt() - 1.0).abs())
    }

    /// Sup of the ODE residual over the table nodes and three interior points
    /// per interval that meet `[lo, hi]`.
    pub fn verify(&self, lo: f64, hi: f64) -> Result<f64> {
        if !(lo <= hi) {
            return Err(Error::InvalidArgument(format!("empty interval [{lo}, {hi}]")));
        }
        let a = if lo <= 0.0 && hi >= 0.0 { 0.0 } else { lo.abs().min(hi.abs()) };
        let b = lo.abs().max(hi.abs());
        if b > self.s_max {
            return Err(Error::OutOfRange { value: b, limit: self.s_max });
        }
        let first = Self::locate(&self.s, a);
        let last = Self::locate(&self.s, b);
        let mut worst: f64 = 0.0;
        for i in first..=last {
            let (s0, s1) = (self.s[i], self.s[i + 1]);
            for x in [0.0, 0.25, 0.5, 0.75, 1.0] {
                let s = s0 + x * (s1 - s0);
                if s >= a && s <= b {
                    worst = worst.max(self.ode_residual(s)?);
                }
            }
        }
        Ok(worst)
    }

    /// Samples the structural properties of `f` at `samples` log-spaced
    /// points of `[1e-8, s_max]` and their mirror images.
    pub fn check_properties(&self, samples: usize) -> Result<PropertyReport> {
        if samples < 2 {
            return Err(Error::InvalidArgument("need at least 2 samples".into()));
        }
        let grid = crate::nonlinearity::log_grid(1e-8, self.s_max, samples);
        let mut r = PropertyReport {
            samples: 2 * samples,
            derivative_bound_ok: true,
            contraction_ok: true,
            slope_sandwich_ok: true,
            sqrt_growth_ok: true,
            worst_relative_violation: 0.0,
            tail: None,
        };
        let mut worst: f64 = 0.0;
        let mut r_worst = |e: f64| worst = worst.max(e);
        let mut prev_ratio = 0.0;
        for &a in &grid {
            for s in [a, -a] {
                let (f, df) = self.f_and_prime(s)?;
                let (af, a_s) = (f.abs(), s.abs());
                // 0 < f' <= 1
                if !(df > 0.0) {
                    r.derivative_bound_ok = false;
                }
                let e = df - 1.0;
                if e > PROPERTY_RTOL {
                    r.derivative_bound_ok = false;
                }
                r_worst(e);
                // |f(s)| <= |s|
                let e = (af - a_s) / a_s;
                if e > PROPERTY_RTOL {
                    r.contraction_ok = false;
                }
                r_worst(e);
                // |f|/2 <= f'|s| <= |f|
                let m = df * a_s;
                let e = ((0.5 * af - m) / af).max((m - af) / af);
                if e > PROPERTY_RTOL {
                    r.slope_sandwich_ok = false;
                }
                r_worst(e);
            }
            let ratio = self.f_eval(a)? / a.sqrt();
            let e = (prev_ratio - ratio) / ratio;
            if e > PROPERTY_RTOL {
                r.sqrt_growth_ok = false;
            }
            r_worst(e);
            prev_ratio = ratio;
        }
        r.worst_relative_violation = worst;
        if let Some(alpha) = self.theta.alpha() {
            let big = self.s_max;
            let (f, df) = self.f_and_prime(big)?;
            let sqrt_target = (8.0 / (alpha * alpha)).powf(0.25);
            let product_target = 2f64.sqrt() / alpha;
            let f_over_sqrt = f / big.sqrt();
            let f_prime_f = df * f;
            r.tail = Some(TailReport {
                s: big,
                f_over_sqrt,
                sqrt_target,
                f_over_s: f / big,
                f_prime_f,
                product_target,
                ok: (f_over_sqrt - sqrt_target).abs() <= TAIL_RTOL * sqrt_target
                    && (f_prime_f - product_target).abs() <= TAIL_RTOL * product_target
                    && f / big < TAIL_RTOL,
            });
        }
        Ok(r)
    }
}

/// Relative slack for the sampled inequalities (interpolation round-off).
pub const PROPERTY_RTOL: f64 = 1e-9;
/// Relative tolerance on the tail limits.
pub const TAIL_RTOL: f64 = 1e-2;

/// Outcome of [`DualTransform::check_properties`].
#[derive(Clone, Debug)]
pub struct PropertyReport {
    pub samples: usize,
    /// `0 < f'(s) ≤ 1`.
    pub derivative_bound_ok: bool,
    /// `|f(s)| ≤ |s|`.
    pub contraction_ok: bool,
    /// `|f(s)|/2 ≤ f'(s)|s| ≤ |f(s)|`.
    pub slope_sandwich_ok: bool,
    /// `f(s)/√s` nondecreasing on `(0, s_max]`.
    pub sqrt_growth_ok: bool,
    pub worst_relative_violation: f64,
    /// Present when θ has an asymptotic constant.
    pub tail: Option<TailReport>,
}

impl PropertyReport {
    pub fn all_ok(&self) -> bool {
        self.derivative_bound_ok
            && self.contraction_ok
            && self.slope_sandwich_ok
            && self.sqrt_growth_ok
            && self.tail.as_ref().is_none_or(|t| t.ok)
    }
}

#[derive(Clone, Debug)]
pub struct TailReport {
    pub s: f64,
    pub f_over_sqrt: f64,
    /// `(8/α²)^{1/4}`.
    pub sqrt_target: f64,
    pub f_over_s: f64,
    pub f_prime_f: f64,
    /// `√2/α`.
    pub product_target: f64,
    pub ok: bool,
}

/// Cubic Hermite value and slope on `[x0, x1]` with a Fritsch–Carlson limiter.
#[inline]
fn hermite(x0: f64, x1: f64, y0: f64, y1: f64, mut m0: f64, mut m1: f64, x: f64) -> (f64, f64) {
    let h = x1 - x0;
    let delta = (y1 - y0) / h;
    let (al, be) = (m0 / delta, m1 / delta);
    let r2 = al * al + be * be;
    if r2 > 9.0 {
        let tau = 3.0 / r2.sqrt();
        m0 = tau * al * delta;
        m1 = tau * be * delta;
    }
    let z = (x - x0) / h;
    let z2 = z * z;
    let z3 = z2 * z;
    let value = (2.0 * z3 - 3.0 * z2 + 1.0) * y0
        + (z3 - 2.0 * z2 + z) * h * m0
        + (-2.0 * z3 + 3.0 * z2) * y1
        + (z3 - z2) * h * m1;
    let slope = (6.0 * z - 6.0 * z2) * delta + (3.0 * z2 - 4.0 * z + 1.0) * m0 + (3.0 * z2 - 2.0 * z) * m1;
    (value, slope)
}

fn interval_residual(theta: &ThetaSpec, a: Node, b: Node) -> f64 {
    let mut worst: f64 = 0.0;
    for x in PROBES {
        let s = a.s + x * (b.s - a.s);
        let (p, dp) = hermite(a.s, b.s, a.t, b.t, 1.0 / a.root, 1.0 / b.root, s);
        worst = worst.max((dp * theta.eval(p).sqrt() - 1.0).abs());
    }
    worst
}

/// Υ evaluated by quadrature; the exact inverse of `f`.
pub fn upsilon_exact(theta: &ThetaSpec, t: f64) -> Result<f64> {
    upsilon(theta, t)
}
