//! Adaptive Gauss–Kronrod (7/15) quadrature.

use crate::theta::ThetaSpec;
use crate::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const MAX_DEPTH: u32 = 60;

/// Result of a single 15-point panel: (Kronrod estimate, |Kronrod − Gauss|).
fn panel<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Result<(f64, f64)> {
    let c = 0.5 * (a + b);
    let r = 0.5 * (b - a);
    let eval = |x: f64| {
        let y = f(x);
        if y.is_finite() {
            Ok(y)
        } else {
            Err(Error::NonFinite { at: x, value: y })
        }
    };
    let fc = eval(c)?;
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = r * XGK[j];
        let s = eval(c - dx)? + eval(c + dx)?;
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    Ok((kron * r, ((kron - gauss) * r).abs()))
}

fn recurse<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    whole: (f64, f64),
    abs_tol: f64,
    depth: u32,
) -> Result<f64> {
    let (est, err) = whole;
    if err <= abs_tol || depth >= MAX_DEPTH || (b - a).abs() <= 4.0 * f64::EPSILON * a.abs().max(b.abs()) {
        return Ok(est);
    }
    let m = 0.5 * (a + b);
    let left = panel(f, a, m)?;
    let right = panel(f, m, b)?;
    Ok(recurse(f, a, m, left, 0.5 * abs_tol, depth + 1)?
        + recurse(f, m, b, right, 0.5 * abs_tol, depth + 1)?)
}

/// Integrates `f` over `[a, b]` to the larger of `rel_tol·|I|` and `abs_tol`.
///
/// A non-finite integrand value is an error that names the offending point.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64, abs_tol: f64) -> Result<f64> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::InvalidArgument(format!("integration limits must be finite, got [{a}, {b}]")));
    }
    if a == b {
        return Ok(0.0);
    }
    let whole = panel(&f, a, b)?;
    // Refine the magnitude estimate once so the relative target is not set
    // by a single poorly resolved panel.
    let m = 0.5 * (a + b);
    let (l, r) = (panel(&f, a, m)?, panel(&f, m, b)?);
    let scale = (l.0 + r.0).abs().max(whole.0.abs());
    let tol = (rel_tol * scale).max(abs_tol);
    if whole.1 <= tol {
        return Ok(whole.0);
    }
    Ok(recurse(&f, a, m, l, 0.5 * tol, 1)? + recurse(&f, m, b, r, 0.5 * tol, 1)?)
}

/// Υ(t) = ∫₀ᵗ θ(r)^{1/2} dr, odd in `t`.
pub fn upsilon(theta: &ThetaSpec, t: f64) -> Result<f64> {
    if !t.is_finite() {
        return Err(Error::NonFinite { at: t, value: t });
    }
    let mag = integrate(|r| theta.eval(r).sqrt(), 0.0, t.abs(), 1e-13, 0.0)?;
    Ok(mag.copysign(t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn polynomials_are_exact() {
        let v = integrate(|x| x.powi(5) - 3.0 * x * x + 1.0, -1.0, 2.0, 1e-14, 0.0).unwrap();
        assert_relative_eq!(v, 64.0 / 6.0 - 1.0 / 6.0 - 9.0 + 3.0, max_relative = 1e-14);
    }

    #[test]
    fn smooth_transcendental() {
        let v = integrate(f64::exp, 0.0, 3.0, 1e-12, 0.0).unwrap();
        assert_relative_eq!(v, 3f64.exp() - 1.0, max_relative = 1e-12);
        let v = integrate(|x| 1.0 / (1.0 + x * x), 0.0, 1e3, 1e-12, 0.0).unwrap();
        assert_relative_eq!(v, 1e3f64.atan(), max_relative = 1e-12);
    }

    #[test]
    fn endpoint_singularity_is_resolved() {
        let v = integrate(|x: f64| x.sqrt(), 0.0, 1.0, 1e-10, 0.0).unwrap();
        assert_relative_eq!(v, 2.0 / 3.0, max_relative = 1e-10);
    }

    #[test]
    fn reversed_limits_flip_sign() {
        let v = integrate(f64::cos, 1.0, 0.0, 1e-12, 0.0).unwrap();
        assert_relative_eq!(v, -(1f64.sin()), max_relative = 1e-12);
    }

    #[test]
    fn non_finite_integrand_is_reported() {
        let r = integrate(|x| if x > 0.5 { f64::INFINITY } else { x }, 0.0, 1.0, 1e-10, 0.0);
        match r {
            Err(Error::NonFinite { at, .. }) => assert!(at > 0.5),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn upsilon_unit_is_identity() {
        assert_relative_eq!(upsilon(&ThetaSpec::unit(), 3.0).unwrap(), 3.0, max_relative = 1e-15);
    }

    #[test]
    fn upsilon_theta1_closed_form() {
        let exact = |t: f64| 0.5 * (t * (1.0 + t * t).sqrt() + t.asinh());
        let th = ThetaSpec::theta1();
        for t in [1e-6, 0.3, 1.0, 7.5, 200.0] {
            assert_relative_eq!(upsilon(&th, t).unwrap(), exact(t), max_relative = 1e-12);
        }
        assert_relative_eq!(upsilon(&th, 1.0).unwrap(), 1.147_793_574_696_319, max_relative = 1e-12);
        assert_eq!(upsilon(&th, -1.0).unwrap(), -upsilon(&th, 1.0).unwrap());
    }
}
