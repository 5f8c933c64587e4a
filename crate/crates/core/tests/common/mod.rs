//! Independent reference solutions for the integration tests.

#![allow(dead_code)]

/// One RK4 integration of `v'' = -λ v³`, `v(0) = 0`, `v'(0) = c` over
/// `[0, 1]` with `steps` steps; returns the samples `v(k/steps)` and the first
/// sign change position (if any).
pub fn shoot_cubic(lambda: f64, c: f64, steps: usize) -> (Vec<f64>, Option<f64>) {
    let h = 1.0 / steps as f64;
    let rhs = |y: [f64; 2]| [y[1], -lambda * y[0].powi(3)];
    let mut y = [0.0, c];
    let mut out = Vec::with_capacity(steps + 1);
    out.push(0.0);
    let mut zero = None;
    for k in 0..steps {
        let k1 = rhs(y);
        let k2 = rhs([y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1]]);
        let k3 = rhs([y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1]]);
        let k4 = rhs([y[0] + h * k3[0], y[1] + h * k3[1]]);
        let prev = y[0];
        y[0] += h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]);
        y[1] += h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]);
        if zero.is_none() && k > 0 && prev > 0.0 && y[0] <= 0.0 {
            zero = Some((k as f64 + prev / (prev - y[0])) * h);
        }
        out.push(y[0]);
    }
    (out, zero)
}

/// Positive solution of `-v'' = λ v³` on `(0, 1)` with zero boundary values,
/// sampled at `steps + 1` equispaced points, by bisection on `v'(0)`.
pub fn cubic_oracle(lambda: f64, steps: usize) -> Vec<f64> {
    // too steep a start reaches zero before x = 1
    let hits_early = |c: f64| {
        let (v, z) = shoot_cubic(lambda, c, steps);
        z.is_some() || v[steps] < 0.0
    };
    let (mut lo, mut hi) = (1e-3, 1.0);
    while hits_early(lo) {
        lo *= 0.5;
    }
    while !hits_early(hi) {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hits_early(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    shoot_cubic(lambda, 0.5 * (lo + hi), steps).0
}

/// Linear interpolation of equispaced samples on `[0, 1]`.
pub fn sample(values: &[f64], x: f64) -> f64 {
    let n = values.len() - 1;
    let p = (x * n as f64).clamp(0.0, n as f64);
    let i = (p.floor() as usize).min(n - 1);
    let w = p - i as f64;
    values[i] * (1.0 - w) + values[i + 1] * w
}

