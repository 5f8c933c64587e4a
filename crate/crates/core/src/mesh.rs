//! Finite-difference Dirichlet discretization of an interval or rectangle,
//! the padded domain `D ⊃ Ω̄`, principal eigenpairs and the torsion function.

use std::ops::{Deref, DerefMut};

use crate::linalg::{cg, norm2, norm_inf, Band, CgTolerance};
use crate::{Error, Result};

/// Default padding of `D` around `Ω`, as a fraction of each side.
pub const DEFAULT_PAD: f64 = 0.1;

/// Values at the interior nodes of a mesh; the Dirichlet boundary value 0 is
/// implicit.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Field(pub Vec<f64>);

impl Field {
    pub fn zeros(n: usize) -> Self {
        Field(vec![0.0; n])
    }

    pub fn sup_norm(&self) -> f64 {
        norm_inf(&self.0)
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn scaled(&self, c: f64) -> Field {
        Field(self.0.iter().map(|v| c * v).collect())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field(self.0.iter().map(|&v| f(v)).collect())
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for Field {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for Field {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for Field {
    fn from(v: Vec<f64>) -> Self {
        Field(v)
    }
}

/// Uniform grid on an interval (`dim = 1`) or rectangle (`dim = 2`) with `n`
/// interior nodes per axis and spacing `h = side/(n+1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainMesh {
    bounds: Vec<(f64, f64)>,
    n: usize,
    h: Vec<f64>,
    pad: f64,
}

/// Principal (or low) Dirichlet eigenpair with sup-normalized eigenfunction.
#[derive(Clone, Debug)]
pub struct EigenPair {
    pub k: usize,
    pub value: f64,
    pub vector: Field,
}

/// The torsion function `e` of the padded domain and its extremes over `Ω̄`.
#[derive(Clone, Debug)]
pub struct Torsion {
    /// `e` on the interior nodes of `D`.
    pub e_padded: Field,
    /// `e` restricted to the interior nodes of `Ω`.
    pub e: Field,
    /// min of `e` over `Ω̄`.
    pub e_l: f64,
    /// max of `e` over `Ω̄`.
    pub e_m: f64,
    /// Padding actually realized on the grid (whole number of cells).
    pub effective_pad: f64,
    /// Padding cells per side.
    pub cells: usize,
}

impl DomainMesh {
    pub fn new(bounds: Vec<(f64, f64)>, n: usize, pad: f64) -> Result<Self> {
        if bounds.is_empty() || bounds.len() > 2 {
            return Err(Error::InvalidArgument(format!("dimension must be 1 or 2, got {}", bounds.len())));
        }
        if n == 0 {
            return Err(Error::InvalidArgument("n must be at least 1".into()));
        }
        if !(pad > 0.0 && pad.is_finite()) {
            return Err(Error::InvalidArgument(format!("pad must be positive, got {pad}")));
        }
        for &(a, b) in &bounds {
            if !(a.is_finite() && b.is_finite() && b > a) {
                return Err(Error::InvalidArgument(format!("bad bounds ({a}, {b})")));
            }
        }
        let h = bounds.iter().map(|&(a, b)| (b - a) / (n + 1) as f64).collect();
        Ok(Self { bounds, n, h, pad })
    }

    pub fn interval(a: f64, b: f64, n: usize) -> Result<Self> {
        Self::new(vec![(a, b)], n, DEFAULT_PAD)
    }

    pub fn rectangle(x: (f64, f64), y: (f64, f64), n: usize) -> Result<Self> {
        Self::new(vec![x, y], n, DEFAULT_PAD)
    }

    /// `(0, 1)` with `n` interior nodes.
    pub fn unit_interval(n: usize) -> Result<Self> {
        Self::interval(0.0, 1.0, n)
    }

    pub fn with_pad(mut self, pad: f64) -> Result<Self> {
        if !(pad > 0.0 && pad.is_finite()) {
            return Err(Error::InvalidArgument(format!("pad must be positive, got {pad}")));
        }
        self.pad = pad;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> &[f64] {
        &self.h
    }

    /// Largest spacing.
    pub fn h_max(&self) -> f64 {
        self.h.iter().copied().fold(0.0, f64::max)
    }

    pub fn pad(&self) -> f64 {
        self.pad
    }

    /// Number of interior nodes.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim() as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Quadrature weight `h^dim` of the discrete inner product.
    pub fn cell_volume(&self) -> f64 {
        self.h.iter().product()
    }

    /// Coordinates of interior node `idx` (x fastest).
    pub fn coords(&self, idx: usize) -> Vec<f64> {
        let mut rest = idx;
        self.bounds
            .iter()
            .zip(&self.h)
            .map(|(&(a, _), &h)| {
                let i = rest % self.n;
                rest /= self.n;
                a + h * (i + 1) as f64
            })
            .collect()
    }

    pub fn field_from_fn(&self, f: impl Fn(&[f64]) -> f64) -> Field {
        Field((0..self.len()).map(|i| f(&self.coords(i))).collect())
    }

    /// `⟨a, b⟩_h = h^dim Σ aᵢbᵢ`.
    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        self.cell_volume() * crate::linalg::dot(a, b)
    }

    pub fn check(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.len() {
            return Err(Error::MeshMismatch { expected: self.len(), got: v.len() });
        }
        Ok(())
    }

    /// `y = (-Δ_h + diag(shift)) x` without allocation; `shift` may be empty.
    pub(crate) fn apply_into(&self, x: &[f64], shift: &[f64], y: &mut [f64]) {
        let n = self.n;
        match self.dim() {
            1 => {
                let c = 1.0 / (self.h[0] * self.h[0]);
                for i in 0..n {
                    let l = if i > 0 { x[i - 1] } else { 0.0 };
                    let r = if i + 1 < n { x[i + 1] } else { 0.0 };
                    y[i] = c * (2.0 * x[i] - l - r);
                }
            }
            _ => {
                let cx = 1.0 / (self.h[0] * self.h[0]);
                let cy = 1.0 / (self.h[1] * self.h[1]);
                for j in 0..n {
                    for i in 0..n {
                        let k = j * n + i;
                        let w = if i > 0 { x[k - 1] } else { 0.0 };
                        let e = if i + 1 < n { x[k + 1] } else { 0.0 };
                        let s = if j > 0 { x[k - n] } else { 0.0 };
                        let nn = if j + 1 < n { x[k + n] } else { 0.0 };
                        y[k] = cx * (2.0 * x[k] - w - e) + cy * (2.0 * x[k] - s - nn);
                    }
                }
            }
        }
        if !shift.is_empty() {
            for i in 0..y.len() {
                y[i] += shift[i] * x[i];
            }
        }
    }

    /// `-Δ_h v` (positive operator).
    pub fn laplacian_apply(&self, v: &[f64]) -> Result<Field> {
        self.check(v)?;
        let mut y = vec![0.0; v.len()];
        self.apply_into(v, &[], &mut y);
        Ok(Field(y))
    }

    /// Solves `(-Δ_h + k) w = rhs` by conjugate gradients, optionally warm
    /// started from `x0`.
    pub fn solve_shifted_poisson(&self, rhs: &[f64], k: f64, x0: Option<&[f64]>) -> Result<Field> {
        if !(k >= 0.0 && k.is_finite()) {
            return Err(Error::InvalidArgument(format!("shift K must be nonnegative, got {k}")));
        }
        self.check(rhs)?;
        if let Some(x) = x0 {
            self.check(x)?;
        }
        let shift = vec![k; rhs.len()];
        self.solve_diag_shifted(rhs, &shift, x0)
    }

    /// Solves `(-Δ_h + diag(d)) w = rhs` for `d ≥ 0` by conjugate gradients.
    pub fn solve_diag_shifted(&self, rhs: &[f64], d: &[f64], x0: Option<&[f64]>) -> Result<Field> {
        self.check(rhs)?;
        self.check(d)?;
        if d.iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::InvalidArgument("diagonal shift must be nonnegative".into()));
        }
        let (x, _) = cg(|x, y| self.apply_into(x, d, y), rhs, x0, CgTolerance::default())?;
        Ok(Field(x))
    }

    /// Band matrix of `-Δ_h + diag(d)`.
    pub(crate) fn band(&self, d: &[f64]) -> Band {
        let n = self.n;
        match self.dim() {
            1 => {
                let c = 1.0 / (self.h[0] * self.h[0]);
                let mut a = Band::zeros(n, 1, 1);
                for i in 0..n {
                    a.set(i, i, 2.0 * c + d.get(i).copied().unwrap_or(0.0));
                    if i > 0 {
                        a.set(i, i - 1, -c);
                    }
                    if i + 1 < n {
                        a.set(i, i + 1, -c);
                    }
                }
                a
            }
            _ => {
                let cx = 1.0 / (self.h[0] * self.h[0]);
                let cy = 1.0 / (self.h[1] * self.h[1]);
                let len = n * n;
                let mut a = Band::zeros(len, n, n);
                for j in 0..n {
                    for i in 0..n {
                        let k = j * n + i;
                        a.set(k, k, 2.0 * (cx + cy) + d.get(k).copied().unwrap_or(0.0));
                        if i > 0 {
                            a.set(k, k - 1, -cx);
                        }
                        if i + 1 < n {
                            a.set(k, k + 1, -cx);
                        }
                        if j > 0 {
                            a.set(k, k - n, -cy);
                        }
                        if j + 1 < n {
                            a.set(k, k + n, -cy);
                        }
                    }
                }
                a
            }
        }
    }

    /// Deterministic start vector with components along every mode.
    fn seed(&self) -> Vec<f64> {
        (0..self.len()).map(|i| 1.0 + 0.37 * ((i * 7919 % 101) as f64 / 101.0)).collect()
    }

    /// The `k`-th Dirichlet eigenpair of `-Δ_h` (`k ≥ 1`) by inverse
    /// iteration with deflation against the lower ones.
    pub fn principal_eigenpair(&self, k: usize) -> Result<EigenPair> {
        if k == 0 || k > 10 {
            return Err(Error::InvalidArgument(format!("eigen index must lie in 1..=10, got {k}")));
        }
        let lu = self
            .band(&[])
            .factor()
            .map_err(|p| Error::InvariantFailure { what: "discrete Laplacian singular", margin: p.pivot })?;
        let mut lower: Vec<Vec<f64>> = Vec::new();
        let mut result = None;
        for idx in 1..=k {
            let (value, vector) = inverse_iteration(|x| lu.solve(x), &lower, self.seed())?;
            let unit = {
                let nrm = norm2(&vector);
                vector.iter().map(|v| v / nrm).collect::<Vec<_>>()
            };
            lower.push(unit);
            if idx == k {
                result = Some((value, vector));
            }
        }
        let (value, mut vector) = result.expect("k >= 1");
        let peak = vector.iter().copied().fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
        for v in vector.iter_mut() {
            *v /= peak;
        }
        if k == 1 && vector.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::InvariantFailure {
                what: "principal eigenfunction not positive",
                margin: vector.iter().copied().fold(f64::INFINITY, f64::min),
            });
        }
        Ok(EigenPair { k, value, vector: Field(vector) })
    }

    /// Smallest eigenvalue of `-Δ_h + diag(d)` and its eigenvector
    /// (sup-normalized, positive maximum).
    pub fn smallest_eigenvalue(&self, d: &[f64]) -> Result<(f64, Field)> {
        self.check(d)?;
        if d.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite diagonal".into()));
        }
        // Weyl: the smallest eigenvalue exceeds min(d), so this shift keeps
        // the target the one closest to sigma from above.
        let sigma = d.iter().copied().fold(f64::INFINITY, f64::min);
        let shifted: Vec<f64> = d.iter().map(|v| v - sigma).collect();
        let lu = self
            .band(&shifted)
            .factor()
            .map_err(|p| Error::InvariantFailure { what: "shifted operator singular", margin: p.pivot })?;
        let (mu, mut v) = inverse_iteration(|x| lu.solve(x), &[], self.seed())?;
        let m = v.iter().copied().fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
        for x in v.iter_mut() {
            *x /= m;
        }
        Ok((mu + sigma, Field(v)))
    }

    /// Mesh of the padded domain `D`: `m` extra cells on every side, where
    /// `m = round(pad·(n+1))`, at least 1.
    pub fn padded(&self) -> Result<(DomainMesh, usize)> {
        let m = ((self.pad * (self.n + 1) as f64).round() as usize).max(1);
        let bounds = self
            .bounds
            .iter()
            .zip(&self.h)
            .map(|(&(a, b), &h)| (a - m as f64 * h, b + m as f64 * h))
            .collect();
        Ok((DomainMesh::new(bounds, self.n + 2 * m, self.pad)?, m))
    }

    /// Solves `-Δe = 1` on `D` and reports the extremes of `e` over `Ω̄`.
    pub fn torsion_function(&self) -> Result<Torsion> {
        let (big, m) = self.padded()?;
        let ones = vec![1.0; big.len()];
        let e_big = big.solve_shifted_poisson(&ones, 0.0, None)?;
        let nd = big.n;
        let n = self.n;
        // Ω̄ spans D indices m-1 ..= n+m on each axis.
        let closure = (m - 1)..=(n + m);
        let interior = m..(n + m);
        let (mut e_l, mut e_m) = (f64::INFINITY, f64::NEG_INFINITY);
        let mut e = Vec::with_capacity(self.len());
        match self.dim() {
            1 => {
                for i in closure.clone() {
                    e_l = e_l.min(e_big[i]);
                    e_m = e_m.max(e_big[i]);
                }
                e.extend_from_slice(&e_big[interior]);
            }
            _ => {
                for j in closure.clone() {
                    for i in closure.clone() {
                        let v = e_big[j * nd + i];
                        e_l = e_l.min(v);
                        e_m = e_m.max(v);
                    }
                }
                for j in interior.clone() {
                    for i in interior.clone() {
                        e.push(e_big[j * nd + i]);
                    }
                }
            }
        }
        if !(e_l > 0.0) {
            return Err(Error::InvariantFailure { what: "torsion function not positive on the closure", margin: e_l });
        }
        let effective_pad = m as f64 / (n + 1) as f64;
        Ok(Torsion { e_padded: e_big, e: Field(e), e_l, e_m, effective_pad, cells: m })
    }
}

/// Inverse iteration `x ← solve(x)` orthogonalized against `lower` (unit
/// vectors). Returns the eigenvalue of the operator that `solve` inverts and
/// the final iterate.
fn inverse_iteration<S>(solve: S, lower: &[Vec<f64>], mut x: Vec<f64>) -> Result<(f64, Vec<f64>)>
where
    S: Fn(&[f64]) -> Vec<f64>,
{
    let deflate = |x: &mut Vec<f64>| {
        for q in lower {
            let c = crate::linalg::dot(q, x);
            for (xi, qi) in x.iter_mut().zip(q) {
                *xi -= c * qi;
            }
        }
    };
    deflate(&mut x);
    let mut nrm = norm2(&x);
    x.iter_mut().for_each(|v| *v /= nrm);
    let mut prev = f64::NAN;
    const MAX_ITER: usize = 20_000;
    for it in 0..MAX_ITER {
        let mut y = solve(&x);
        deflate(&mut y);
        // Rayleigh quotient of the inverse: xᵀy ≈ 1/μ
        let rq = crate::linalg::dot(&x, &y);
        nrm = norm2(&y);
        y.iter_mut().for_each(|v| *v /= nrm);
        let mu = 1.0 / rq;
        let diff: f64 = x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        x = y;
        if it > 2 && (mu - prev).abs() <= 1e-13 * mu.abs().max(1e-300) && diff < 1e-7 {
            return Ok((mu, x));
        }
        prev = mu;
    }
    Err(Error::NoConvergence { method: "inverse iteration", iterations: MAX_ITER, residual: f64::NAN })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn discrete_lambda1(h: f64) -> f64 {
        (2.0 - 2.0 * (PI * h).cos()) / (h * h)
    }

    #[test]
    fn sine_is_discrete_eigenfunction() {
        let m = DomainMesh::unit_interval(99).unwrap();
        let v = m.field_from_fn(|x| (PI * x[0]).sin());
        let lv = m.laplacian_apply(&v).unwrap();
        let target = discrete_lambda1(m.h()[0]);
        for (a, b) in lv.iter().zip(v.iter()) {
            assert!((a / b - target).abs() < 1e-8 * target);
        }
    }

    #[test]
    fn zero_maps_to_zero() {
        let m = DomainMesh::rectangle((0.0, 1.0), (0.0, 2.0), 7).unwrap();
        let z = m.laplacian_apply(&vec![0.0; m.len()]).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));
        assert!(matches!(m.laplacian_apply(&[1.0; 3]), Err(Error::MeshMismatch { .. })));
    }

    #[test]
    fn torsion_of_unit_interval() {
        let m = DomainMesh::unit_interval(399).unwrap();
        let w = m.solve_shifted_poisson(&vec![1.0; m.len()], 0.0, None).unwrap();
        for (i, v) in w.iter().enumerate() {
            let x = m.coords(i)[0];
            assert!((v - x * (1.0 - x) / 2.0).abs() < 1e-9);
        }
        assert!((w.max() - 0.125).abs() < 1e-5);
    }

    #[test]
    fn shifted_poisson_residual_contract() {
        let m = DomainMesh::unit_interval(200).unwrap();
        let rhs = m.field_from_fn(|x| (3.0 * x[0]).exp());
        let w = m.solve_shifted_poisson(&rhs, 7.5, None).unwrap();
        let mut r = m.laplacian_apply(&w).unwrap();
        for i in 0..r.len() {
            r[i] += 7.5 * w[i] - rhs[i];
        }
        assert!(norm2(&r) <= 1e-10 * norm2(&rhs));
        assert!(m.solve_shifted_poisson(&rhs, -1.0, None).is_err());
    }

    #[test]
    fn principal_pair_1d() {
        let m = DomainMesh::unit_interval(400).unwrap();
        let ep = m.principal_eigenpair(1).unwrap();
        let exact = discrete_lambda1(m.h()[0]);
        assert!((ep.value - exact).abs() <= 1e-10 * exact);
        assert!((ep.value - PI * PI).abs() < 1e-3 * PI * PI);
        assert_eq!(ep.vector.max(), 1.0);
        assert!(ep.vector.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn second_pair_1d() {
        let m = DomainMesh::unit_interval(100).unwrap();
        let ep = m.principal_eigenpair(2).unwrap();
        let h = m.h()[0];
        let exact = (2.0 - 2.0 * (2.0 * PI * h).cos()) / (h * h);
        assert!((ep.value - exact).abs() <= 1e-9 * exact);
        assert!((ep.vector.sup_norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn principal_pair_2d() {
        let m = DomainMesh::rectangle((0.0, 1.0), (0.0, 1.0), 31).unwrap();
        let ep = m.principal_eigenpair(1).unwrap();
        let exact = 2.0 * discrete_lambda1(m.h()[0]);
        assert!((ep.value - exact).abs() <= 1e-9 * exact);
        assert!((ep.value - 2.0 * PI * PI).abs() < 0.01 * 2.0 * PI * PI);
    }

    #[test]
    fn padded_torsion_closed_form() {
        let m = DomainMesh::unit_interval(399).unwrap();
        let t = m.torsion_function().unwrap();
        assert_eq!(t.cells, 40);
        assert!((t.e_l - 0.055).abs() < 1e-9);
        assert!((t.e_m - 0.18).abs() < 1e-9);
        assert!(t.e_padded.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn smallest_eigenvalue_with_constant_shift() {
        let m = DomainMesh::unit_interval(50).unwrap();
        let (mu, v) = m.smallest_eigenvalue(&vec![-3.0; 50]).unwrap();
        let exact = discrete_lambda1(m.h()[0]) - 3.0;
        assert!((mu - exact).abs() < 1e-9 * exact.abs());
        assert!(v.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn bad_meshes() {
        assert!(DomainMesh::new(vec![], 3, 0.1).is_err());
        assert!(DomainMesh::new(vec![(0.0, 1.0)], 0, 0.1).is_err());
        assert!(DomainMesh::new(vec![(0.0, 1.0)], 3, 0.0).is_err());
        assert!(DomainMesh::new(vec![(1.0, 0.0)], 3, 0.1).is_err());
    }
}
