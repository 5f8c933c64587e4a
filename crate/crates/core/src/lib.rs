//! Dual change-of-variable solver for generalized quasilinear Schrödinger
//! problems
//!
//! ```text
//! -div(θ(u)∇u) + ½ θ'(u)|∇u|² = λ |u|^{q-1} u   in Ω,   u = 0 on ∂Ω.
//! ```
//!
//! The substitution `u = f(v)`, with `f' = θ(f)^{-1/2}` and `f(0) = 0`, turns
//! the quasilinear operator into the plain Laplacian:
//!
//! ```text
//! -Δv = λ g(v),   g(s) = f'(s) |f(s)|^{q-1} f(s).
//! ```
//!
//! The crate is layered bottom-up:
//!
//! - [`theta`]: coefficient functions θ and sampled hypothesis checks.
//! - [`dual_transform`]: the tabulated map `f`, its derivatives and inverse.
//! - [`nonlinearity`]: `g`, its primitive `G`, slope classification and the
//!   Pohozaev scan.
//! - [`mesh`]: finite-difference Dirichlet Laplacian, CG solves, eigenpairs
//!   and the torsion function.
//! - [`solver`]: sub/super-solutions, monotone iteration, Newton, energy and
//!   recovery of `u`.
//! - [`continuation`]: λ-sweeps, threshold bisection and the asymptotic
//!   branch studies.

// `!(x > 0.0)` deliberately rejects NaN; index loops mirror the stencil math.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod continuation;
pub mod dual_transform;
mod error;
mod linalg;
pub mod mesh;
pub mod nonlinearity;
pub mod quadrature;
pub mod solver;
pub mod theta;

pub use error::{Error, Result};
