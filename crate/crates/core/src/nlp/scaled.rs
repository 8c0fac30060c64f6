use super::{NlpProblem, SparseMatrix};

/// A problem expressed in scaled variables `z_s = z / d` with objective
/// `f / s_f`. Constraints are left in the units of the wrapped problem.
pub struct Scaled<'a, P: NlpProblem> {
    inner: &'a P,
    var_scale: Vec<f64>,
    objective_scale: f64,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl<'a, P: NlpProblem> Scaled<'a, P> {
    pub fn new(inner: &'a P, var_scale: Vec<f64>, objective_scale: f64) -> Self {
        assert_eq!(var_scale.len(), inner.n_vars(), "one scale per variable");
        assert!(var_scale.iter().all(|d| *d > 0.0) && objective_scale > 0.0);
        let (lo, hi) = inner.bounds();
        let lower = lo.iter().zip(&var_scale).map(|(b, d)| b / d).collect();
        let upper = hi.iter().zip(&var_scale).map(|(b, d)| b / d).collect();
        Self { inner, var_scale, objective_scale, lower, upper }
    }

    pub fn var_scale(&self) -> &[f64] {
        &self.var_scale
    }

    pub fn objective_scale(&self) -> f64 {
        self.objective_scale
    }

    /// Physical variables to scaled variables.
    pub fn scale(&self, z: &[f64]) -> Vec<f64> {
        z.iter().zip(&self.var_scale).map(|(v, d)| v / d).collect()
    }

    /// Scaled variables back to physical variables.
    pub fn unscale(&self, zs: &[f64]) -> Vec<f64> {
        zs.iter().zip(&self.var_scale).map(|(v, d)| v * d).collect()
    }

    fn scale_columns(&self, mut j: SparseMatrix) -> SparseMatrix {
        for e in &mut j.entries {
            e.2 *= self.var_scale[e.1];
        }
        j
    }
}

impl<P: NlpProblem> NlpProblem for Scaled<'_, P> {
    fn n_vars(&self) -> usize {
        self.inner.n_vars()
    }

    fn n_eq(&self) -> usize {
        self.inner.n_eq()
    }

    fn n_ineq(&self) -> usize {
        self.inner.n_ineq()
    }

    fn bounds(&self) -> (&[f64], &[f64]) {
        (&self.lower, &self.upper)
    }

    fn hessian_bandwidth(&self) -> Option<usize> {
        self.inner.hessian_bandwidth()
    }

    fn objective(&self, zs: &[f64]) -> f64 {
        self.inner.objective(&self.unscale(zs)) / self.objective_scale
    }

    fn eq_constraints(&self, zs: &[f64], out: &mut [f64]) {
        self.inner.eq_constraints(&self.unscale(zs), out)
    }

    fn ineq_constraints(&self, zs: &[f64], out: &mut [f64]) {
        self.inner.ineq_constraints(&self.unscale(zs), out)
    }

    fn objective_gradient(&self, zs: &[f64], grad: &mut [f64]) {
        self.inner.objective_gradient(&self.unscale(zs), grad);
        for (g, d) in grad.iter_mut().zip(&self.var_scale) {
            *g *= d / self.objective_scale;
        }
    }

    fn eq_jacobian(&self, zs: &[f64]) -> SparseMatrix {
        self.scale_columns(self.inner.eq_jacobian(&self.unscale(zs)))
    }

    fn ineq_jacobian(&self, zs: &[f64]) -> SparseMatrix {
        self.scale_columns(self.inner.ineq_jacobian(&self.unscale(zs)))
    }

    fn eq_jacobian_t_product(&self, zs: &[f64], w: &[f64], out: &mut [f64]) {
        self.inner.eq_jacobian_t_product(&self.unscale(zs), w, out);
        for (o, d) in out.iter_mut().zip(&self.var_scale) {
            *o *= d;
        }
    }

    fn ineq_jacobian_t_product(&self, zs: &[f64], w: &[f64], out: &mut [f64]) {
        self.inner.ineq_jacobian_t_product(&self.unscale(zs), w, out);
        for (o, d) in out.iter_mut().zip(&self.var_scale) {
            *o *= d;
        }
    }
}
