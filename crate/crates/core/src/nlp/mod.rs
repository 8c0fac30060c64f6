//! Smooth nonlinear programs with box bounds, and the solver for them.
//!
//! A problem is
//!
//! ```text
//! minimize f(z)  subject to  c(z) = 0,  g(z) <= 0,  lower <= z <= upper
//! ```
//!
//! The solver only talks to a problem through [`NlpProblem`]. Derivatives
//! default to central finite differences; problems with analytic derivatives
//! override the gradient and Jacobian methods.

mod auglag;
mod lbfgs;
mod newton;
mod scaled;

pub use auglag::{kkt_check, solve, IterationLog, KktReport, NlpSolution, SolveStatus, SolverSettings};
pub use lbfgs::{minimize_box, BoxObjective, InnerReport, InnerStatus};
pub use newton::{minimize_box_banded, NewtonSettings};
pub use scaled::Scaled;

use crate::par;

/// Relative step used by the default finite-difference derivatives.
pub const FD_STEP: f64 = 1e-6;

/// Sparse matrix in coordinate form. Duplicate entries are summed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

impl SparseMatrix {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, entries: Vec::new() }
    }

    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.nrows && col < self.ncols);
        if value != 0.0 {
            self.entries.push((row, col, value));
        }
    }

    /// `out = A v`
    pub fn mul_vec(&self, v: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for &(r, c, a) in &self.entries {
            out[r] += a * v[c];
        }
    }

    /// `out = A^T w`
    pub fn tmul_vec(&self, w: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for &(r, c, a) in &self.entries {
            out[c] += a * w[r];
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for &(r, c, a) in &self.entries {
            d[r][c] += a;
        }
        d
    }
}

/// A nonlinear program as seen by the solver.
///
/// Implementations must be reentrant: every method may be called
/// concurrently for distinct decision vectors.
pub trait NlpProblem: Sync {
    fn n_vars(&self) -> usize;
    fn n_eq(&self) -> usize;
    fn n_ineq(&self) -> usize {
        0
    }

    /// Lower and upper variable bounds. Every entry must be finite.
    fn bounds(&self) -> (&[f64], &[f64]);

    fn objective(&self, z: &[f64]) -> f64;

    /// Equality constraint residuals `c(z)`.
    fn eq_constraints(&self, z: &[f64], out: &mut [f64]);

    /// Inequality residuals `g(z)`, feasible when `<= 0`.
    fn ineq_constraints(&self, _z: &[f64], _out: &mut [f64]) {}

    fn objective_gradient(&self, z: &[f64], grad: &mut [f64]) {
        fd_gradient(|x| self.objective(x), z, grad);
    }

    fn eq_jacobian(&self, z: &[f64]) -> SparseMatrix {
        fd_jacobian(|x, out| self.eq_constraints(x, out), z, self.n_eq())
    }

    fn ineq_jacobian(&self, z: &[f64]) -> SparseMatrix {
        fd_jacobian(|x, out| self.ineq_constraints(x, out), z, self.n_ineq())
    }

    /// Half-bandwidth of the Lagrangian Hessian in variable order, when it
    /// is banded. Enables the projected Newton inner solver.
    fn hessian_bandwidth(&self) -> Option<usize> {
        None
    }

    /// `out = J_eq(z)^T w`.
    fn eq_jacobian_t_product(&self, z: &[f64], w: &[f64], out: &mut [f64]) {
        self.eq_jacobian(z).tmul_vec(w, out);
    }

    /// `out = J_ineq(z)^T w`.
    fn ineq_jacobian_t_product(&self, z: &[f64], w: &[f64], out: &mut [f64]) {
        if self.n_ineq() == 0 {
            out.fill(0.0);
            return;
        }
        self.ineq_jacobian(z).tmul_vec(w, out);
    }
}

fn fd_step(x: f64) -> f64 {
    FD_STEP * x.abs().max(1.0)
}

/// Central-difference gradient of a scalar function.
pub fn fd_gradient<F>(f: F, z: &[f64], grad: &mut [f64])
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let column = |i: usize| {
        let h = fd_step(z[i]);
        let mut x = z.to_vec();
        x[i] = z[i] + h;
        let fp = f(&x);
        x[i] = z[i] - h;
        let fm = f(&x);
        (fp - fm) / (2.0 * h)
    };
    let g = par::map_indexed(z.len(), 8, column);
    grad.copy_from_slice(&g);
}

/// Central-difference Jacobian of a vector function, column by column.
pub fn fd_jacobian<F>(c: F, z: &[f64], m: usize) -> SparseMatrix
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    let mut jac = SparseMatrix::new(m, z.len());
    if m == 0 {
        return jac;
    }
    let column = |i: usize| {
        let h = fd_step(z[i]);
        let mut x = z.to_vec();
        let (mut cp, mut cm) = (vec![0.0; m], vec![0.0; m]);
        x[i] = z[i] + h;
        c(&x, &mut cp);
        x[i] = z[i] - h;
        c(&x, &mut cm);
        cp.iter().zip(&cm).map(|(p, q)| (p - q) / (2.0 * h)).collect::<Vec<f64>>()
    };
    let cols = par::map_indexed(z.len(), 4, column);
    for (j, col) in cols.into_iter().enumerate() {
        for (i, v) in col.into_iter().enumerate() {
            jac.push(i, j, v);
        }
    }
    jac
}

/// Central-difference directional derivative `J(z) v` of a vector function.
pub fn fd_directional<F>(c: F, z: &[f64], v: &[f64], m: usize, step: f64) -> Vec<f64>
where
    F: Fn(&[f64], &mut [f64]),
{
    let plus: Vec<f64> = z.iter().zip(v).map(|(a, b)| a + step * b).collect();
    let minus: Vec<f64> = z.iter().zip(v).map(|(a, b)| a - step * b).collect();
    let (mut cp, mut cm) = (vec![0.0; m], vec![0.0; m]);
    c(&plus, &mut cp);
    c(&minus, &mut cm);
    cp.iter().zip(&cm).map(|(p, q)| (p - q) / (2.0 * step)).collect()
}

/// Clamps `z` into the box in place.
pub fn project(z: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((v, lo), hi) in z.iter_mut().zip(lower).zip(upper) {
        *v = v.clamp(*lo, *hi);
    }
}

pub(crate) fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}
