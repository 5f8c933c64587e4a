//! The dual nonlinearity `g(s) = f'(s)|f(s)|^{q-1}f(s)`, its primitive
//! `G(s) = |f(s)|^{q+1}/(q+1)` and derivative, the slope classification of
//! `g(s)/s` and the Pohozaev scan.

use std::fmt;
use std::sync::Arc;

use crate::dual_transform::DualTransform;
use crate::{Error, Result};

/// Relative slack for strict monotonicity comparisons of `g(s)/s`.
pub const SLOPE_MONOTONE_RTOL: f64 = 1e-10;

/// Solution structure by exponent.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Regime {
    /// `0 < q < 1`
    Sublinear,
    /// `q = 1`
    LinearAtZero,
    /// `1 < q < 3`
    Between,
    /// `q = 3`
    CriticalSlope,
    /// `3 < q < 2·2* - 1`
    Superlinear,
    /// `q ≥ 2·2* - 1`
    Supercritical,
}

impl Regime {
    pub fn classify(q: f64, dim: usize) -> Self {
        if q < 1.0 {
            Regime::Sublinear
        } else if q == 1.0 {
            Regime::LinearAtZero
        } else if q < 3.0 {
            Regime::Between
        } else if q == 3.0 {
            Regime::CriticalSlope
        } else if q < critical_exponent(dim) {
            Regime::Superlinear
        } else {
            Regime::Supercritical
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Regime::Sublinear => "sublinear",
            Regime::LinearAtZero => "linear-at-0",
            Regime::Between => "between",
            Regime::CriticalSlope => "critical-slope",
            Regime::Superlinear => "superlinear",
            Regime::Supercritical => "supercritical",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// `2·2* - 1 = (3N + 2)/(N - 2)`; infinite for `N ≤ 2`.
pub fn critical_exponent(dim: usize) -> f64 {
    if dim <= 2 {
        f64::INFINITY
    } else {
        let n = dim as f64;
        (3.0 * n + 2.0) / (n - 2.0)
    }
}

/// Whether a solve may run at this λ.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SignDecision {
    Proceed,
    /// λ ≤ 0: the problem has no nontrivial solution.
    Refuse,
}

pub fn sign_guard(lambda: f64) -> SignDecision {
    if lambda > 0.0 {
        SignDecision::Proceed
    } else {
        SignDecision::Refuse
    }
}

/// [`sign_guard`] as a `Result`, for solver entry points.
pub fn require_positive(lambda: f64) -> Result<()> {
    if !lambda.is_finite() {
        return Err(Error::NonFinite { at: lambda, value: lambda });
    }
    match sign_guard(lambda) {
        SignDecision::Proceed => Ok(()),
        SignDecision::Refuse => Err(Error::NonPositiveLambda { lambda }),
    }
}

#[derive(Clone, Debug)]
pub struct Nonlinearity {
    q: f64,
    transform: Arc<DualTransform>,
}

impl Nonlinearity {
    pub fn new(q: f64, transform: Arc<DualTransform>) -> Result<Self> {
        if !(q > 0.0 && q.is_finite()) {
            return Err(Error::InvalidArgument(format!("q must be positive and finite, got {q}")));
        }
        Ok(Self { q, transform })
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn transform(&self) -> &Arc<DualTransform> {
        &self.transform
    }

    pub fn regime(&self, dim: usize) -> Regime {
        Regime::classify(self.q, dim)
    }

    /// `g(s)`; `g(0) = 0` for every `q > 0`.
    pub fn g(&self, s: f64) -> Result<f64> {
        let (u, du) = self.transform.f_and_prime(s)?;
        if u == 0.0 {
            return Ok(0.0);
        }
        Ok(du * u.abs().powf(self.q - 1.0) * u)
    }

    /// `G(s) = |f(s)|^{q+1}/(q+1)`.
    #[allow(non_snake_case)]
    pub fn G(&self, s: f64) -> Result<f64> {
        let u = self.transform.f_eval(s)?;
        Ok(u.abs().powf(self.q + 1.0) / (self.q + 1.0))
    }

    /// `g'(s)`, even in `s`. At the origin this is `1/θ(0)` for `q = 1` and
    /// `0` for `q > 1`; for `q < 1` it is singular.
    pub fn g_prime(&self, s: f64) -> Result<f64> {
        let u = self.transform.f_eval(s)?.abs();
        let theta = self.transform.theta();
        if u == 0.0 {
            return if self.q < 1.0 {
                Err(Error::Singular { q: self.q })
            } else if self.q == 1.0 {
                Ok(1.0 / theta.eval(0.0))
            } else {
                Ok(0.0)
            };
        }
        let th = theta.eval(u);
        let dth = theta.deriv(u);
        Ok(u.powf(self.q - 1.0) * (2.0 * self.q * th - dth * u) / (2.0 * th * th))
    }

    /// `(g(s), g'(s))` from one table lookup; `g'` is `+∞` at a singular origin.
    pub fn g_and_prime(&self, s: f64) -> Result<(f64, f64)> {
        let u = self.transform.f_eval(s)?;
        let theta = self.transform.theta();
        let a = u.abs();
        if a == 0.0 {
            let d = if self.q < 1.0 {
                f64::INFINITY
            } else if self.q == 1.0 {
                1.0 / theta.eval(0.0)
            } else {
                0.0
            };
            return Ok((0.0, d));
        }
        let th = theta.eval(a);
        let dth = theta.deriv(a);
        let pw = a.powf(self.q - 1.0);
        let g = pw * u / th.sqrt();
        let dg = pw * (2.0 * self.q * th - dth * a) / (2.0 * th * th);
        Ok((g, dg))
    }

    /// `g(s)/s`, with its limit at the origin (`+∞`, `1/θ(0)` or `0`).
    pub fn slope(&self, s: f64) -> Result<f64> {
        if s == 0.0 {
            return self.g_prime(0.0).or(Ok(f64::INFINITY));
        }
        Ok(self.g(s)? / s)
    }

    pub fn g_field(&self, v: &[f64]) -> Result<Vec<f64>> {
        v.iter().map(|&s| self.g(s)).collect()
    }

    #[allow(non_snake_case)]
    pub fn G_field(&self, v: &[f64]) -> Result<Vec<f64>> {
        v.iter().map(|&s| self.G(s)).collect()
    }

    pub fn g_prime_field(&self, v: &[f64]) -> Result<Vec<f64>> {
        v.iter().map(|&s| self.g_prime(s)).collect()
    }

    /// Largest `s` at which the scalar checks sample.
    fn sample_ceiling(&self) -> f64 {
        self.transform.s_max().min(1e6)
    }

    /// Checks the limits of `g(s)/s` at 0 and ∞ and its monotonicity on a
    /// log-spaced grid of `[1e-8, min(s_max, 1e6)]`.
    pub fn classify_slopes(&self, dim: usize) -> Result<SlopeReport> {
        const SAMPLES: usize = 400;
        let lo: f64 = 1e-8;
        let hi = self.sample_ceiling();
        let grid = log_grid(lo, hi, SAMPLES);
        let slopes: Vec<f64> = grid.iter().map(|&s| self.slope(s)).collect::<Result<_>>()?;
        let q = self.q;
        let theta0 = self.transform.theta().at_zero();

        let exponent = |i: usize, j: usize| (slopes[j].ln() - slopes[i].ln()) / (grid[j].ln() - grid[i].ln());

        let zero_exponent = exponent(0, 1);
        let zero_value = slopes[0];
        let (zero_expected, zero_ok) = if q < 1.0 {
            (
                SlopeLimit::Infinite,
                (zero_exponent - (q - 1.0)).abs() < 0.05 && slopes[0] > slopes[1],
            )
        } else if q == 1.0 {
            let target = 1.0 / theta0;
            (SlopeLimit::Finite(target), (zero_value - target).abs() <= 1e-3)
        } else {
            (SlopeLimit::Zero, (zero_exponent - (q - 1.0)).abs() < 0.05)
        };

        let n = SAMPLES - 1;
        let tail_exponent = exponent(n - 40, n);
        let tail_value = slopes[n];
        let (tail_expected, tail_ok) = if q < 3.0 {
            (SlopeLimit::Zero, (tail_exponent - (q - 3.0) / 2.0).abs() < 0.05)
        } else if q == 3.0 {
            match self.transform.theta().alpha() {
                Some(alpha) => {
                    let target = 4.0 / (alpha * alpha);
                    (SlopeLimit::Finite(target), (tail_value - target).abs() <= 0.01 * target)
                }
                None => (SlopeLimit::Unknown, false),
            }
        } else {
            (SlopeLimit::Infinite, tail_exponent > 0.0 && (tail_exponent - (q - 3.0) / 2.0).abs() < 0.05)
        };

        let expected_trend = if q <= 1.0 {
            Trend::Decreasing
        } else if q >= 3.0 {
            Trend::Increasing
        } else {
            Trend::Unspecified
        };
        let mut worst = 0.0f64;
        let mut monotone_ok = true;
        for k in 1..slopes.len() {
            let (a, b) = (slopes[k - 1], slopes[k]);
            let rel = (b - a) / a.abs();
            let violation = match expected_trend {
                Trend::Decreasing => rel,
                Trend::Increasing => -rel,
                Trend::Unspecified => continue,
            };
            if violation > SLOPE_MONOTONE_RTOL {
                monotone_ok = false;
                worst = worst.max(violation);
            }
        }

        Ok(SlopeReport {
            q,
            regime: self.regime(dim),
            critical_exponent: critical_exponent(dim),
            zero_value,
            zero_exponent,
            zero_expected,
            zero_ok,
            tail_value,
            tail_exponent,
            tail_expected,
            tail_ok,
            trend: expected_trend,
            monotone_ok,
            worst_monotone_violation: worst,
        })
    }

    /// `z(s) = (N-2)/2 · g(s) s - N G(s)`.
    pub fn pohozaev_z(&self, dim: usize, s: f64) -> Result<f64> {
        let n = dim as f64;
        Ok(0.5 * (n - 2.0) * self.g(s)? * s - n * self.G(s)?)
    }

    /// `g(s)/(g'(s) s)`.
    pub fn pohozaev_ratio(&self, s: f64) -> Result<f64> {
        let (g, dg) = self.g_and_prime(s)?;
        Ok(g / (dg * s))
    }

    /// Evaluates `z` and the ratio on `samples` log-spaced points of
    /// `[s_lo, s_hi]`.
    pub fn pohozaev_scan(&self, dim: usize, s_lo: f64, s_hi: f64, samples: usize) -> Result<PohozaevReport> {
        if dim < 3 {
            return Err(Error::InvalidArgument(format!("the Pohozaev scan needs N >= 3, got {dim}")));
        }
        if !(s_lo > 0.0 && s_hi > s_lo) || samples < 2 {
            return Err(Error::InvalidArgument(format!(
                "need 0 < s_lo < s_hi and at least 2 samples, got [{s_lo}, {s_hi}] with {samples}"
            )));
        }
        let n = dim as f64;
        let grid = log_grid(s_lo, s_hi, samples);
        let mut rows = Vec::with_capacity(samples);
        for s in grid {
            rows.push(PohozaevSample { s, z: self.pohozaev_z(dim, s)?, ratio: self.pohozaev_ratio(s)? });
        }
        let min_z = rows.iter().map(|r| r.z).fold(f64::INFINITY, f64::min);
        let max_ratio = rows.iter().map(|r| r.ratio).fold(f64::NEG_INFINITY, f64::max);
        let ratio_bound = if self.q > 1.0 { 2.0 / (self.q - 1.0) } else { f64::INFINITY };
        let condition = (n - 2.0) / (n + 2.0);
        Ok(PohozaevReport {
            dim,
            q: self.q,
            min_z,
            max_ratio,
            ratio_bound,
            condition,
            z_positive: min_z > 0.0,
            ratio_below_bound: max_ratio < ratio_bound,
            nonexistence: min_z > 0.0 && max_ratio <= condition,
            samples: rows,
        })
    }
}

/// `n` log-spaced points covering `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|k| {
            if k + 1 == n {
                hi
            } else {
                (a + (b - a) * k as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SlopeLimit {
    Zero,
    Finite(f64),
    Infinite,
    /// No prediction (q = 3 without α).
    Unknown,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Trend {
    Decreasing,
    Increasing,
    Unspecified,
}

#[derive(Clone, Debug)]
pub struct SlopeReport {
    pub q: f64,
    pub regime: Regime,
    pub critical_exponent: f64,
    /// `g(s)/s` at the smallest sample.
    pub zero_value: f64,
    /// Log-log slope of `g(s)/s` at the smallest samples.
    pub zero_exponent: f64,
    pub zero_expected: SlopeLimit,
    pub zero_ok: bool,
    /// `g(s)/s` at the largest sample.
    pub tail_value: f64,
    pub tail_exponent: f64,
    pub tail_expected: SlopeLimit,
    pub tail_ok: bool,
    pub trend: Trend,
    pub monotone_ok: bool,
    pub worst_monotone_violation: f64,
}

impl SlopeReport {
    pub fn all_ok(&self) -> bool {
        self.zero_ok && self.tail_ok && self.monotone_ok
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PohozaevSample {
    pub s: f64,
    pub z: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug)]
pub struct PohozaevReport {
    pub dim: usize,
    pub q: f64,
    pub min_z: f64,
    pub max_ratio: f64,
    /// `2/(q-1)`.
    pub ratio_bound: f64,
    /// `(N-2)/(N+2)`.
    pub condition: f64,
    pub z_positive: bool,
    pub ratio_below_bound: bool,
    /// `z > 0` everywhere and the ratio never exceeds `(N-2)/(N+2)`.
    pub nonexistence: bool,
    pub samples: Vec<PohozaevSample>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate;
    use crate::theta::ThetaSpec;
    use approx::assert_relative_eq;
    use std::sync::OnceLock;

    fn t1() -> Arc<DualTransform> {
        static T: OnceLock<Arc<DualTransform>> = OnceLock::new();
        T.get_or_init(|| Arc::new(DualTransform::with_defaults(ThetaSpec::theta1()).unwrap()))
            .clone()
    }

    fn unit() -> Arc<DualTransform> {
        static T: OnceLock<Arc<DualTransform>> = OnceLock::new();
        T.get_or_init(|| Arc::new(DualTransform::build(ThetaSpec::unit(), 1e4, 1e-10).unwrap()))
            .clone()
    }

    #[test]
    fn identity_transform_values() {
        let n3 = Nonlinearity::new(3.0, unit()).unwrap();
        assert_relative_eq!(n3.g(2.0).unwrap(), 8.0, max_relative = 1e-12);
        assert_relative_eq!(n3.g_prime(2.0).unwrap(), 12.0, max_relative = 1e-12);
        let n1 = Nonlinearity::new(1.0, unit()).unwrap();
        assert_relative_eq!(n1.G(2.0).unwrap(), 2.0, max_relative = 1e-12);
    }

    #[test]
    fn origin_values() {
        for q in [0.5, 1.0, 2.0, 3.0] {
            let n = Nonlinearity::new(q, t1()).unwrap();
            assert_eq!(n.g(0.0).unwrap(), 0.0);
            assert_eq!(n.G(0.0).unwrap(), 0.0);
        }
        assert_eq!(Nonlinearity::new(1.0, t1()).unwrap().g_prime(0.0).unwrap(), 1.0);
        assert_eq!(Nonlinearity::new(2.0, t1()).unwrap().g_prime(0.0).unwrap(), 0.0);
        assert!(matches!(
            Nonlinearity::new(0.5, t1()).unwrap().g_prime(0.0),
            Err(Error::Singular { .. })
        ));
    }

    #[test]
    fn theta3_origin_slope() {
        let tr = Arc::new(DualTransform::build(ThetaSpec::theta3(), 100.0, 1e-10).unwrap());
        let n = Nonlinearity::new(1.0, tr).unwrap();
        assert_relative_eq!(n.g_prime(0.0).unwrap(), 1.0 / (1.0 + 2f64.ln()), max_relative = 1e-15);
    }

    #[test]
    fn critical_slope_tail() {
        let n = Nonlinearity::new(3.0, t1()).unwrap();
        assert!((n.slope(1e6).unwrap() - 2.0).abs() < 0.02);
    }

    #[test]
    fn g_prime_matches_central_difference() {
        let n = Nonlinearity::new(2.0, t1()).unwrap();
        let h = 1e-4;
        let fd = (n.g(1.0 + h).unwrap() - n.g(1.0 - h).unwrap()) / (2.0 * h);
        assert_relative_eq!(n.g_prime(1.0).unwrap(), fd, max_relative = 1e-6);
    }

    #[test]
    fn g_and_prime_agree_with_separate_calls() {
        for q in [0.5, 1.0, 2.5, 5.0] {
            let n = Nonlinearity::new(q, t1()).unwrap();
            for s in [-3.0, 0.01, 1.7, 40.0] {
                let (g, dg) = n.g_and_prime(s).unwrap();
                assert_relative_eq!(g, n.g(s).unwrap(), max_relative = 1e-14);
                assert_relative_eq!(dg, n.g_prime(s).unwrap(), max_relative = 1e-14);
            }
        }
    }

    #[test]
    fn primitive_matches_quadrature() {
        let n = Nonlinearity::new(2.0, t1()).unwrap();
        let quad = integrate(|s| n.g(s).unwrap(), 0.0, 5.0, 1e-12, 0.0).unwrap();
        assert_relative_eq!(n.G(5.0).unwrap(), quad, max_relative = 1e-8);
    }

    #[test]
    fn slope_classification_theta1() {
        for q in [0.5, 1.0, 2.0, 3.0, 5.0] {
            let r = Nonlinearity::new(q, t1()).unwrap().classify_slopes(3).unwrap();
            assert!(r.all_ok(), "q = {q}: {r:?}");
        }
        let r = Nonlinearity::new(0.5, t1()).unwrap().classify_slopes(3).unwrap();
        assert!(r.zero_value > 1e3);
        assert_eq!(r.trend, Trend::Decreasing);
        let r = Nonlinearity::new(5.0, t1()).unwrap().classify_slopes(3).unwrap();
        assert_eq!(r.tail_expected, SlopeLimit::Infinite);
        assert_eq!(r.regime, Regime::Superlinear);
    }

    #[test]
    fn regimes_and_critical_exponent() {
        assert_eq!(critical_exponent(3), 11.0);
        assert!(critical_exponent(2).is_infinite());
        assert_eq!(Regime::classify(0.5, 3), Regime::Sublinear);
        assert_eq!(Regime::classify(1.0, 3), Regime::LinearAtZero);
        assert_eq!(Regime::classify(2.0, 3), Regime::Between);
        assert_eq!(Regime::classify(3.0, 3), Regime::CriticalSlope);
        assert_eq!(Regime::classify(5.0, 3), Regime::Superlinear);
        assert_eq!(Regime::classify(11.0, 3), Regime::Supercritical);
        assert_eq!(Regime::classify(50.0, 2), Regime::Superlinear);
    }

    #[test]
    fn sign_guard_decisions() {
        assert_eq!(sign_guard(-1.0), SignDecision::Refuse);
        assert_eq!(sign_guard(0.0), SignDecision::Refuse);
        assert_eq!(sign_guard(0.5), SignDecision::Proceed);
        assert!(require_positive(0.0).unwrap_err().is_refusal());
    }

    #[test]
    fn pohozaev_identity_transform() {
        let n = Nonlinearity::new(11.0, unit()).unwrap();
        for s in [0.1, 1.0, 3.0] {
            assert_relative_eq!(n.pohozaev_z(3, s).unwrap(), s.powi(12) / 4.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn pohozaev_theta1() {
        let n = Nonlinearity::new(11.0, t1()).unwrap();
        let r = n.pohozaev_scan(3, 1e-6, 1e4, 1000).unwrap();
        assert!(r.z_positive && r.ratio_below_bound && r.nonexistence, "{:?}", (r.min_z, r.max_ratio));
        let r = Nonlinearity::new(2.0, t1()).unwrap().pohozaev_scan(3, 1e-6, 1e4, 1000).unwrap();
        assert!(r.min_z < 0.0);
        assert!(!r.nonexistence);
        assert!(n.pohozaev_scan(2, 1e-6, 1.0, 10).is_err());
    }

    #[test]
    fn rejects_bad_q() {
        assert!(Nonlinearity::new(0.0, t1()).is_err());
        assert!(Nonlinearity::new(f64::NAN, t1()).is_err());
    }
}
