//! Conjugate gradients and a banded LU factorization with partial pivoting.

use crate::{Error, Result};

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Stopping rule for [`cg`]: the recursive residual is driven to
/// `inner·‖b‖` and the true residual must end below `outer·‖b‖`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct CgTolerance {
    pub inner: f64,
    pub outer: f64,
    pub max_iter: usize,
}

impl Default for CgTolerance {
    fn default() -> Self {
        Self { inner: 1e-12, outer: 1e-10, max_iter: 20_000 }
    }
}

/// Solves `A x = b` for symmetric positive definite `A` given as a matrix-free
/// product. Restarts from the current iterate when the recursive residual has
/// drifted from the true one.
pub(crate) fn cg<A>(apply: A, b: &[f64], x0: Option<&[f64]>, tol: CgTolerance) -> Result<(Vec<f64>, usize)>
where
    A: Fn(&[f64], &mut [f64]),
{
    let n = b.len();
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        return Ok((vec![0.0; n], 0));
    }
    let mut x = match x0 {
        Some(v) => v.to_vec(),
        None => vec![0.0; n],
    };
    let mut ax = vec![0.0; n];
    let mut r = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut ap = vec![0.0; n];
    let mut total = 0usize;
    for _restart in 0..8 {
        apply(&x, &mut ax);
        for i in 0..n {
            r[i] = b[i] - ax[i];
        }
        let true_res = norm2(&r);
        if true_res <= tol.outer * bnorm && (total > 0 || true_res <= tol.inner * bnorm) {
            return Ok((x, total));
        }
        p.copy_from_slice(&r);
        let mut rr = dot(&r, &r);
        loop {
            if rr.sqrt() <= tol.inner * bnorm || total >= tol.max_iter {
                break;
            }
            apply(&p, &mut ap);
            let pap = dot(&p, &ap);
            if !(pap > 0.0) {
                return Err(Error::NoConvergence { method: "cg", iterations: total, residual: rr.sqrt() / bnorm });
            }
            let alpha = rr / pap;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            let rr_new = dot(&r, &r);
            let beta = rr_new / rr;
            rr = rr_new;
            for i in 0..n {
                p[i] = r[i] + beta * p[i];
            }
            total += 1;
        }
        if total >= tol.max_iter {
            apply(&x, &mut ax);
            let res = b.iter().zip(&ax).map(|(bi, ai)| (bi - ai).powi(2)).sum::<f64>().sqrt();
            if res <= tol.outer * bnorm {
                return Ok((x, total));
            }
            return Err(Error::NoConvergence { method: "cg", iterations: total, residual: res / bnorm });
        }
    }
    apply(&x, &mut ax);
    let res = b.iter().zip(&ax).map(|(bi, ai)| (bi - ai).powi(2)).sum::<f64>().sqrt();
    if res <= tol.outer * bnorm {
        Ok((x, total))
    } else {
        Err(Error::NoConvergence { method: "cg", iterations: total, residual: res / bnorm })
    }
}

/// A square band matrix with `kl` sub- and `ku` super-diagonals, stored by
/// rows with room for the `kl` extra super-diagonals that pivoting creates.
#[derive(Clone, Debug)]
pub(crate) struct Band {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
}

/// A zero (or numerically zero) pivot met during factorization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct SingularPivot {
    pub row: usize,
    pub pivot: f64,
}

impl Band {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self { n, kl, ku, width, data: vec![0.0; n * width] }
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.kl >= i && j <= i + self.ku + self.kl);
        i * self.width + (j + self.kl - i)
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(j + self.kl >= i && j <= i + self.ku, "entry ({i}, {j}) outside the band");
        let k = self.idx(i, j);
        self.data[k] = v;
    }

    #[cfg(test)]
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let lo = i.saturating_sub(self.kl);
            let hi = (i + self.ku).min(self.n - 1);
            let mut acc = 0.0;
            for j in lo..=hi {
                acc += self.data[self.idx(i, j)] * x[j];
            }
            y[i] = acc;
        }
    }

    /// Factors in place. Pivots are chosen per column among the `kl` rows
    /// below the diagonal; a pivot below `1e-14` times the largest entry of
    /// the matrix is reported as singular.
    pub fn factor(mut self) -> std::result::Result<BandLu, SingularPivot> {
        let n = self.n;
        let scale = self.data.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        let mut piv = vec![0usize; n];
        let reach = self.ku + self.kl;
        for k in 0..n {
            let last_row = (k + self.kl).min(n - 1);
            let mut p = k;
            let mut best = self.data[self.idx(k, k)].abs();
            for i in k + 1..=last_row {
                let v = self.data[self.idx(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            piv[k] = p;
            if best <= 1e-14 * scale {
                return Err(SingularPivot { row: k, pivot: best });
            }
            let last_col = (k + reach).min(n - 1);
            if p != k {
                for j in k..=last_col {
                    let (a, b) = (self.idx(k, j), self.idx(p, j));
                    self.data.swap(a, b);
                }
            }
            let d = self.data[self.idx(k, k)];
            for i in k + 1..=last_row {
                let ik = self.idx(i, k);
                let l = self.data[ik] / d;
                self.data[ik] = l;
                if l != 0.0 {
                    for j in k + 1..=last_col {
                        let kj = self.data[self.idx(k, j)];
                        let ij = self.idx(i, j);
                        self.data[ij] -= l * kj;
                    }
                }
            }
        }
        Ok(BandLu { band: self, piv })
    }
}

#[derive(Clone, Debug)]
pub(crate) struct BandLu {
    band: Band,
    piv: Vec<usize>,
}

impl BandLu {
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let a = &self.band;
        let n = a.n;
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk != 0.0 {
                for i in k + 1..=(k + a.kl).min(n - 1) {
                    b[i] -= a.data[a.idx(i, k)] * bk;
                }
            }
        }
        let reach = a.ku + a.kl;
        for k in (0..n).rev() {
            let mut acc = b[k];
            for j in k + 1..=(k + reach).min(n - 1) {
                acc -= a.data[a.idx(k, j)] * b[j];
            }
            b[k] = acc / a.data[a.idx(k, k)];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tridiag(n: usize, sub: f64, diag: f64, sup: f64) -> Band {
        let mut a = Band::zeros(n, 1, 1);
        for i in 0..n {
            a.set(i, i, diag);
            if i > 0 {
                a.set(i, i - 1, sub);
            }
            if i + 1 < n {
                a.set(i, i + 1, sup);
            }
        }
        a
    }

    #[test]
    fn cg_solves_spd_tridiagonal() {
        let a = tridiag(50, -1.0, 2.0, -1.0);
        let b: Vec<f64> = (0..50).map(|i| (i as f64).sin()).collect();
        let (x, _) = cg(|x, y| a.matvec(x, y), &b, None, CgTolerance::default()).unwrap();
        let mut ax = vec![0.0; 50];
        a.matvec(&x, &mut ax);
        let res: f64 = ax.iter().zip(&b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        assert!(res <= 1e-10 * norm2(&b));
    }

    #[test]
    fn cg_zero_rhs() {
        let a = tridiag(5, -1.0, 2.0, -1.0);
        let (x, it) = cg(|x, y| a.matvec(x, y), &[0.0; 5], None, CgTolerance::default()).unwrap();
        assert_eq!(it, 0);
        assert!(x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn lu_matches_matvec_on_indefinite_matrix() {
        // indefinite: needs pivoting on the first column
        let mut a = tridiag(30, 1.0, 0.0, 1.0);
        a.set(5, 5, 3.0);
        let x: Vec<f64> = (0..30).map(|i| 1.0 + 0.1 * i as f64).collect();
        let mut b = vec![0.0; 30];
        a.matvec(&x, &mut b);
        let lu = a.factor().unwrap();
        let y = lu.solve(&b);
        for (p, q) in x.iter().zip(&y) {
            assert!((p - q).abs() < 1e-12, "{p} vs {q}");
        }
    }

    #[test]
    fn lu_wide_band() {
        let n = 40;
        let bw = 6;
        let mut a = Band::zeros(n, bw, bw);
        for i in 0..n {
            a.set(i, i, 4.0 + (i % 3) as f64);
            if i >= bw {
                a.set(i, i - bw, -1.0 + 0.01 * i as f64);
            }
            if i + bw < n {
                a.set(i, i + bw, 5.0);
            }
            if i >= 1 {
                a.set(i, i - 1, 2.0);
            }
        }
        let x: Vec<f64> = (0..n).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let mut b = vec![0.0; n];
        a.matvec(&x, &mut b);
        let y = a.factor().unwrap().solve(&b);
        for (p, q) in x.iter().zip(&y) {
            assert!((p - q).abs() < 1e-10, "{p} vs {q}");
        }
    }

    #[test]
    fn singular_matrix_is_reported() {
        let a = tridiag(4, 0.0, 0.0, 0.0);
        assert!(a.factor().is_err());
    }
}
