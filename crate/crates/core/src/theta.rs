//! Coefficient functions θ: ℝ → [1, ∞) and sampled checks of the structural
//! hypotheses the dual method relies on:
//!
//! - (H1) θ decreasing on (-∞, 0) and increasing on (0, ∞);
//! - (H2) θ(s)/s² nondecreasing on (-∞, 0) and nonincreasing on (0, ∞);
//! - (H3) θ(s)/s² → α²/2 as |s| → ∞ for some α > 0.

use std::fmt;
use std::sync::Arc;

use crate::{Error, Result};

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Relative slack used by every monotonicity comparison.
pub const MONOTONE_RTOL: f64 = 1e-8;
/// Relative agreement required between α estimates over the last sampled decade.
pub const ALPHA_AGREEMENT: f64 = 0.01;
/// Relative tolerance on |2θ(S)/S² - α²| for a declared α.
pub const ALPHA_LIMIT_RTOL: f64 = 0.01;

/// An even coefficient θ with its derivative and, when (H3) holds, the
/// asymptotic constant α.
#[derive(Clone)]
pub struct ThetaSpec {
    name: String,
    eval: ScalarFn,
    deriv: ScalarFn,
    alpha: Option<f64>,
}

impl fmt::Debug for ThetaSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ThetaSpec")
            .field("name", &self.name)
            .field("alpha", &self.alpha)
            .finish()
    }
}

impl ThetaSpec {
    pub fn new<F, D>(name: impl Into<String>, eval: F, deriv: D, alpha: Option<f64>) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
        D: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            eval: Arc::new(eval),
            deriv: Arc::new(deriv),
            alpha,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    #[inline]
    pub fn eval(&self, s: f64) -> f64 {
        (self.eval)(s)
    }

    #[inline]
    pub fn deriv(&self, s: f64) -> f64 {
        (self.deriv)(s)
    }

    pub fn alpha(&self) -> Option<f64> {
        self.alpha
    }

    /// θ(0), which sets the slope of `f` at the origin.
    pub fn at_zero(&self) -> f64 {
        self.eval(0.0)
    }

    /// θ₁(s) = 1 + s².
    pub fn theta1() -> Self {
        Self::new("theta1", |s| 1.0 + s * s, |s| 2.0 * s, Some(2f64.sqrt()))
    }

    /// θ₂(s) = (1 + |s|^p)^{1/p} + s² for p ∈ (1, 2].
    pub fn theta2(p: f64) -> Result<Self> {
        if !(p > 1.0 && p <= 2.0) {
            return Err(Error::InvalidArgument(format!(
                "theta2 requires p in (1, 2], got {p}"
            )));
        }
        let eval = move |s: f64| {
            let a = s.abs();
            (1.0 + a.powf(p)).powf(1.0 / p) + s * s
        };
        let deriv = move |s: f64| {
            let a = s.abs();
            let lead = if a == 0.0 {
                0.0
            } else {
                (1.0 + a.powf(p)).powf(1.0 / p - 1.0) * a.powf(p - 1.0)
            };
            lead.copysign(s) + 2.0 * s
        };
        Ok(Self::new(format!("theta2:p={p}"), eval, deriv, Some(2f64.sqrt())))
    }

    /// θ₃(s) = 1 + ln(1 + e^{s²}).
    pub fn theta3() -> Self {
        Self::new(
            "theta3",
            |s| 1.0 + softplus(s * s),
            |s| 2.0 * s * logistic(s * s),
            Some(2f64.sqrt()),
        )
    }

    /// θ₄(s) = 1 + ln(e^{s·atan s} + e^{s² + s·atan s}) = 1 + s·atan s + ln(1 + e^{s²}).
    pub fn theta4() -> Self {
        Self::new(
            "theta4",
            |s| {
                let a = s.abs();
                1.0 + a * a.atan() + softplus(a * a)
            },
            |s| {
                let a = s.abs();
                let d = a.atan() + a / (1.0 + a * a) + 2.0 * a * logistic(a * a);
                d.copysign(s)
            },
            Some(2f64.sqrt()),
        )
    }

    /// θ₅(s) = 1 + ln((1 + |s|)^{|s|} (1 + e^{s²})) = 1 + |s| ln(1 + |s|) + ln(1 + e^{s²}).
    pub fn theta5() -> Self {
        Self::new(
            "theta5",
            |s| {
                let a = s.abs();
                1.0 + a * a.ln_1p() + softplus(a * a)
            },
            |s| {
                let a = s.abs();
                let d = a.ln_1p() + a / (1.0 + a) + 2.0 * a * logistic(a * a);
                d.copysign(s)
            },
            Some(2f64.sqrt()),
        )
    }

    /// θ ≡ 1: the identity transform. Satisfies (H1)-(H2) trivially and fails (H3).
    pub fn unit() -> Self {
        Self::new("unit", |_| 1.0, |_| 0.0, None)
    }

    /// Looks up a catalog entry by its CLI name: `theta1`, `theta2:p=<val>`,
    /// `theta3`, `theta4`, `theta5` or `unit`. A bare `theta2` uses p = 2.
    pub fn from_name(name: &str) -> Result<Self> {
        let name = name.trim();
        match name {
            "theta1" => Ok(Self::theta1()),
            "theta2" => Self::theta2(2.0),
            "theta3" => Ok(Self::theta3()),
            "theta4" => Ok(Self::theta4()),
            "theta5" => Ok(Self::theta5()),
            "unit" => Ok(Self::unit()),
            other => {
                if let Some(rest) = other.strip_prefix("theta2:p=") {
                    let p: f64 = rest.parse().map_err(|_| {
                        Error::InvalidArgument(format!("bad theta2 exponent '{rest}'"))
                    })?;
                    Self::theta2(p)
                } else {
                    Err(Error::InvalidArgument(format!("unknown theta '{other}'")))
                }
            }
        }
    }
}

/// The built-in coefficients θ₁…θ₅ (θ₂ with exponent `p2`) followed by θ ≡ 1.
pub fn catalog(p2: f64) -> Result<Vec<ThetaSpec>> {
    Ok(vec![
        ThetaSpec::theta1(),
        ThetaSpec::theta2(p2)?,
        ThetaSpec::theta3(),
        ThetaSpec::theta4(),
        ThetaSpec::theta5(),
        ThetaSpec::unit(),
    ])
}

/// ln(1 + e^x) without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// e^x / (1 + e^x).
fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Outcome of [`validate_hypotheses`]. Failed hypotheses are flags, not errors.
#[derive(Clone, Debug, PartialEq)]
pub struct HypothesisReport {
    pub checked_range: (f64, f64),
    /// θ ≥ 1 at every sample.
    pub lower_bound_ok: bool,
    /// |θ(s) - θ(-s)| within round-off at every sample.
    pub even_ok: bool,
    pub h1_ok: bool,
    pub h2_ok: bool,
    pub h3_ok: bool,
    /// Location and size of the largest violation of any failed check.
    pub worst_violation: Option<(f64, f64)>,
    pub alpha_estimate: f64,
}

impl HypothesisReport {
    pub fn all_ok(&self) -> bool {
        self.lower_bound_ok && self.even_ok && self.h1_ok && self.h2_ok && self.h3_ok
    }
}

struct Worst(Option<(f64, f64)>);

impl Worst {
    fn record(&mut self, s: f64, magnitude: f64) {
        match self.0 {
            Some((_, m)) if m >= magnitude => {}
            _ => self.0 = Some((s, magnitude)),
        }
    }
}

/// Samples θ and θ' on a log-spaced grid of [-s_max, s_max] spanning eight
/// decades and checks θ ≥ 1, evenness and (H1)-(H3).
pub fn validate_hypotheses(spec: &ThetaSpec, s_max: f64, samples: usize) -> Result<HypothesisReport> {
    if !(s_max > 0.0 && s_max.is_finite()) {
        return Err(Error::InvalidArgument(format!("s_max must be positive, got {s_max}")));
    }
    if samples < 16 {
        return Err(Error::InvalidArgument(format!("need at least 16 samples, got {samples}")));
    }
    const DECADES: f64 = 8.0;
    let grid: Vec<f64> = (0..samples)
        .map(|k| s_max * 10f64.powf(-DECADES * (1.0 - k as f64 / (samples - 1) as f64)))
        .collect();

    let mut values = Vec::with_capacity(samples);
    let mut worst = Worst(None);
    let mut lower_bound_ok = true;
    let mut even_ok = true;
    let mut h1_ok = true;

    let zero = spec.eval(0.0);
    if !zero.is_finite() {
        return Err(Error::NonFinite { at: 0.0, value: zero });
    }
    if zero < 1.0 {
        lower_bound_ok = false;
        worst.record(0.0, 1.0 - zero);
    }

    for &s in &grid {
        let (tp, tm) = (spec.eval(s), spec.eval(-s));
        let (dp, dm) = (spec.deriv(s), spec.deriv(-s));
        for (at, v) in [(s, tp), (-s, tm), (s, dp), (-s, dm)] {
            if !v.is_finite() {
                return Err(Error::NonFinite { at, value: v });
            }
        }
        for (at, v) in [(s, tp), (-s, tm)] {
            if v < 1.0 {
                lower_bound_ok = false;
                worst.record(at, 1.0 - v);
            }
        }
        let asym = (tp - tm).abs();
        if asym > 1e-12 * (1.0 + tp.abs()) {
            even_ok = false;
            worst.record(s, asym);
        }
        // sign(θ'(s)) = sign(s), relative to the size of θ
        let slack = MONOTONE_RTOL * tp.abs().max(1.0);
        if dp * s < -slack * s || dm * s > slack * s {
            h1_ok = false;
            worst.record(s, (-dp).max(dm));
        }
        values.push(tp);
    }

    // θ nondecreasing along the positive grid
    for k in 1..samples {
        let drop = values[k - 1] - values[k];
        if drop > MONOTONE_RTOL * values[k - 1].abs() {
            h1_ok = false;
            worst.record(grid[k], drop);
        }
    }

    // θ(s)/s² nonincreasing along the positive grid
    let mut h2_ok = true;
    let ratios: Vec<f64> = grid.iter().zip(&values).map(|(s, t)| t / (s * s)).collect();
    for k in 1..samples {
        let rise = ratios[k] - ratios[k - 1];
        if rise > MONOTONE_RTOL * ratios[k - 1].abs() {
            h2_ok = false;
            worst.record(grid[k], rise / ratios[k - 1]);
        }
    }

    let big_s = grid[samples - 1];
    let alpha_estimate = (2.0 * ratios[samples - 1]).sqrt();
    let mut h3_ok = alpha_estimate > 0.0 && alpha_estimate.is_finite();
    for (s, r) in grid.iter().zip(&ratios) {
        if *s < big_s / 10.0 {
            continue;
        }
        let a = (2.0 * r).sqrt();
        if (a - alpha_estimate).abs() > ALPHA_AGREEMENT * alpha_estimate {
            h3_ok = false;
        }
    }
    if let Some(alpha) = spec.alpha() {
        let miss = (2.0 * ratios[samples - 1] - alpha * alpha).abs();
        if miss > ALPHA_LIMIT_RTOL * alpha * alpha {
            h3_ok = false;
            worst.record(big_s, miss);
        }
    }

    Ok(HypothesisReport {
        checked_range: (-s_max, s_max),
        lower_bound_ok,
        even_ok,
        h1_ok,
        h2_ok,
        h3_ok,
        worst_violation: worst.0,
        alpha_estimate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theta1_values() {
        let t = ThetaSpec::theta1();
        assert_eq!(t.eval(0.0), 1.0);
        assert_eq!(t.eval(2.0), 5.0);
        assert_eq!(t.alpha(), Some(2f64.sqrt()));
    }

    #[test]
    fn zero_values_of_catalog() {
        let ln2 = 2f64.ln();
        assert_eq!(ThetaSpec::theta2(1.5).unwrap().at_zero(), 1.0);
        assert!((ThetaSpec::theta3().at_zero() - (1.0 + ln2)).abs() < 1e-15);
        assert!((ThetaSpec::theta4().at_zero() - (1.0 + ln2)).abs() < 1e-15);
        assert!((ThetaSpec::theta5().at_zero() - (1.0 + ln2)).abs() < 1e-15);
    }

    #[test]
    fn theta4_matches_written_form() {
        let t = ThetaSpec::theta4();
        for s in [-3.0, -0.4, 0.0, 0.7, 2.5] {
            let direct = 1.0 + ((s * f64::atan(s)).exp() + (s * s + s * f64::atan(s)).exp()).ln();
            assert!((t.eval(s) - direct).abs() < 1e-12 * direct, "s = {s}");
        }
    }

    #[test]
    fn theta5_matches_written_form() {
        let t = ThetaSpec::theta5();
        for s in [-2.0, -0.3, 0.0, 0.9, 3.0] {
            let a: f64 = f64::abs(s);
            let direct = 1.0 + ((1.0 + a).powf(a) * (1.0 + (s * s).exp())).ln();
            assert!((t.eval(s) - direct).abs() < 1e-12 * direct, "s = {s}");
        }
    }

    #[test]
    fn theta2_rejects_p_one() {
        assert!(ThetaSpec::theta2(1.0).is_err());
        assert!(ThetaSpec::theta2(2.5).is_err());
        assert!(ThetaSpec::theta2(2.0).is_ok());
    }

    #[test]
    fn names_round_trip() {
        for name in ["theta1", "theta2:p=1.5", "theta3", "theta4", "theta5", "unit"] {
            assert_eq!(ThetaSpec::from_name(name).unwrap().name(), name);
        }
        assert!(ThetaSpec::from_name("theta9").is_err());
        assert!(ThetaSpec::from_name("theta2:p=abc").is_err());
    }

    #[test]
    fn catalog_is_even_and_bounded_below() {
        for spec in catalog(1.5).unwrap() {
            for k in 0..400 {
                let s = -60.0 + 0.3 * k as f64 + 0.0137;
                let t = spec.eval(s);
                assert!(t >= 1.0, "{} at {s}", spec.name());
                assert!((t - spec.eval(-s)).abs() <= 1e-12 * (1.0 + t.abs()));
            }
        }
    }

    #[test]
    fn derivative_matches_central_difference_at_second_order() {
        for spec in catalog(1.5).unwrap() {
            for s in [0.3, 1.1, 2.7, -1.9] {
                let err = |h: f64| {
                    ((spec.eval(s + h) - spec.eval(s - h)) / (2.0 * h) - spec.deriv(s)).abs()
                };
                let (e1, e2) = (err(1e-2), err(5e-3));
                if e1 < 1e-11 {
                    continue; // polynomial of degree ≤ 2, exact
                }
                let order = (e1 / e2).log2();
                assert!(order >= 1.9, "{} at {s}: order {order}", spec.name());
            }
        }
    }

    #[test]
    fn theta1_tail_rate() {
        let t = ThetaSpec::theta1();
        let alpha = t.alpha().unwrap();
        for s in [10.0, 100.0, 1000.0] {
            let gap = 2.0 * t.eval(s) / (s * s) - alpha * alpha;
            assert!((gap - 2.0 / (s * s)).abs() < 1e-12);
        }
    }

    #[test]
    fn theta1_passes_all_hypotheses() {
        let r = validate_hypotheses(&ThetaSpec::theta1(), 1e4, 400).unwrap();
        assert!(r.all_ok(), "{r:?}");
        assert!((r.alpha_estimate - 2f64.sqrt()).abs() < 1e-6);
    }

    #[test]
    fn catalog_passes_all_hypotheses() {
        for spec in catalog(1.5).unwrap().into_iter().take(5) {
            let r = validate_hypotheses(&spec, 1e4, 400).unwrap();
            assert!(r.all_ok(), "{}: {r:?}", spec.name());
        }
    }

    #[test]
    fn unit_fails_only_h3() {
        let r = validate_hypotheses(&ThetaSpec::unit(), 1e4, 200).unwrap();
        assert!(r.lower_bound_ok && r.even_ok && r.h1_ok && r.h2_ok);
        assert!(!r.h3_ok);
    }

    #[test]
    fn quartic_fails_h2() {
        let spec = ThetaSpec::new("quartic", |s| 1.0 + s.powi(4), |s| 4.0 * s.powi(3), None);
        let r = validate_hypotheses(&spec, 1e4, 200).unwrap();
        assert!(r.h1_ok);
        assert!(!r.h2_ok);
        assert!(!r.h3_ok);
        assert!(r.worst_violation.is_some());
    }

    #[test]
    fn non_finite_is_rejected() {
        let spec = ThetaSpec::new("bad", |s: f64| if s > 5.0 { f64::NAN } else { 1.0 }, |_| 0.0, None);
        assert!(matches!(
            validate_hypotheses(&spec, 10.0, 32),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn bad_arguments() {
        assert!(validate_hypotheses(&ThetaSpec::theta1(), 0.0, 100).is_err());
        assert!(validate_hypotheses(&ThetaSpec::theta1(), 10.0, 8).is_err());
    }
}
