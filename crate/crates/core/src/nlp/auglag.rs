//! Augmented Lagrangian outer loop.
//!
//! Equalities enter as `lambda^T c + rho/2 |c|^2`; inequalities through the
//! squared hinge `(max(0, mu + rho g)^2 - mu^2) / (2 rho)`. Each subproblem is
//! a box-constrained minimization: projected Newton when the problem reports
//! a banded Hessian, projected L-BFGS otherwise.

use log::{debug, info};
use serde::{Deserialize, Serialize};

use super::lbfgs::{minimize_box, projected_gradient_norm, BoxObjective, InnerSettings, InnerStatus};
use super::newton::{minimize_box_banded, NewtonSettings};
use super::{inf_norm, project, NlpProblem};

/// Penalty above which a stagnant violation is declared infeasible.
const PENALTY_CEILING: f64 = 1e12;
/// Multiplier estimates are kept within this magnitude.
const MULTIPLIER_CAP: f64 = 1e20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSettings {
    pub eq_tol: f64,
    pub ineq_tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub penalty_init: f64,
    /// Applied when the constraint violation fails to shrink by 4x.
    pub penalty_growth: f64,
    /// Floor of the inner projected-gradient tolerance.
    pub step_tol: f64,
    /// L-BFGS memory.
    pub memory: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            eq_tol: 1e-6,
            ineq_tol: 1e-6,
            max_outer: 50,
            max_inner: 500,
            penalty_init: 10.0,
            penalty_growth: 10.0,
            step_tol: 1e-7,
            memory: 10,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<(), (&'static str, String)> {
        for (name, v) in [
            ("eq_tol", self.eq_tol),
            ("ineq_tol", self.ineq_tol),
            ("penalty_init", self.penalty_init),
            ("step_tol", self.step_tol),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err((name, format!("must be > 0, got {v}")));
            }
        }
        if !(self.penalty_growth > 1.0) {
            return Err(("penalty_growth", format!("must be > 1, got {}", self.penalty_growth)));
        }
        if self.max_outer == 0 || self.max_inner == 0 || self.memory == 0 {
            return Err(("max_outer", "iteration budgets and memory must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIter,
    Infeasible,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Converged => "converged",
            Self::MaxIter => "max_iter",
            Self::Infeasible => "infeasible",
        })
    }
}

/// First-order optimality measures at a primal/dual point.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KktReport {
    /// Infinity norm of the projected Lagrangian gradient.
    pub stationarity: f64,
    pub eq_violation: f64,
    pub ineq_violation: f64,
    /// `max_j |min(-g_j, mu_j)|`.
    pub complementarity: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationLog {
    pub outer: usize,
    pub inner_iterations: usize,
    pub objective: f64,
    pub eq_violation: f64,
    pub ineq_violation: f64,
    pub stationarity: f64,
    pub penalty: f64,
}

#[derive(Debug, Clone)]
pub struct NlpSolution {
    pub z: Vec<f64>,
    pub objective: f64,
    pub eq_multipliers: Vec<f64>,
    pub ineq_multipliers: Vec<f64>,
    pub status: SolveStatus,
    pub kkt: KktReport,
    pub log: Vec<IterationLog>,
}

struct Subproblem<'a, P: NlpProblem> {
    problem: &'a P,
    lambda: &'a [f64],
    mu: &'a [f64],
    rho: f64,
}

impl<P: NlpProblem> Subproblem<'_, P> {
    fn terms(&self, c: &[f64], g: &[f64]) -> f64 {
        let eq: f64 = c.iter().zip(self.lambda).map(|(c, l)| l * c + 0.5 * self.rho * c * c).sum();
        let ineq: f64 = g
            .iter()
            .zip(self.mu)
            .map(|(g, m)| {
                let shifted = (m + self.rho * g).max(0.0);
                (shifted * shifted - m * m) / (2.0 * self.rho)
            })
            .sum();
        eq + ineq
    }
}

impl<P: NlpProblem> BoxObjective for Subproblem<'_, P> {
    fn value(&self, z: &[f64]) -> f64 {
        let mut c = vec![0.0; self.problem.n_eq()];
        let mut g = vec![0.0; self.problem.n_ineq()];
        self.problem.eq_constraints(z, &mut c);
        self.problem.ineq_constraints(z, &mut g);
        self.problem.objective(z) + self.terms(&c, &g)
    }

    fn value_and_gradient(&self, z: &[f64], grad: &mut [f64]) -> f64 {
        let p = self.problem;
        let mut c = vec![0.0; p.n_eq()];
        let mut g = vec![0.0; p.n_ineq()];
        p.eq_constraints(z, &mut c);
        p.ineq_constraints(z, &mut g);
        let value = p.objective(z) + self.terms(&c, &g);
        p.objective_gradient(z, grad);
        let mut tmp = vec![0.0; z.len()];
        if !c.is_empty() {
            let w: Vec<f64> = c.iter().zip(self.lambda).map(|(c, l)| l + self.rho * c).collect();
            p.eq_jacobian_t_product(z, &w, &mut tmp);
            grad.iter_mut().zip(&tmp).for_each(|(a, b)| *a += b);
        }
        if !g.is_empty() {
            let w: Vec<f64> = g.iter().zip(self.mu).map(|(g, m)| (m + self.rho * g).max(0.0)).collect();
            p.ineq_jacobian_t_product(z, &w, &mut tmp);
            grad.iter_mut().zip(&tmp).for_each(|(a, b)| *a += b);
        }
        value
    }
}

/// Measures stationarity, feasibility and complementarity at `(z, lambda, mu)`.
pub fn kkt_check<P: NlpProblem + ?Sized>(problem: &P, z: &[f64], lambda: &[f64], mu: &[f64]) -> KktReport {
    let n = problem.n_vars();
    let mut c = vec![0.0; problem.n_eq()];
    let mut g = vec![0.0; problem.n_ineq()];
    problem.eq_constraints(z, &mut c);
    problem.ineq_constraints(z, &mut g);
    let mut grad = vec![0.0; n];
    problem.objective_gradient(z, &mut grad);
    let mut tmp = vec![0.0; n];
    if !c.is_empty() {
        problem.eq_jacobian_t_product(z, lambda, &mut tmp);
        grad.iter_mut().zip(&tmp).for_each(|(a, b)| *a += b);
    }
    if !g.is_empty() {
        problem.ineq_jacobian_t_product(z, mu, &mut tmp);
        grad.iter_mut().zip(&tmp).for_each(|(a, b)| *a += b);
    }
    let (lower, upper) = problem.bounds();
    KktReport {
        stationarity: projected_gradient_norm(z, &grad, lower, upper),
        eq_violation: inf_norm(&c),
        ineq_violation: g.iter().fold(0.0, |m, v| m.max(v.max(0.0))),
        complementarity: g.iter().zip(mu).fold(0.0, |m, (g, u)| m.max((-g).min(*u).abs())),
        iterations: 0,
    }
}

fn is_converged(k: &KktReport, s: &SolverSettings) -> bool {
    k.eq_violation <= s.eq_tol && k.ineq_violation <= s.ineq_tol && k.stationarity <= 10.0 * s.eq_tol
}

/// Minimizes the problem from `z0` (projected onto the box first).
pub fn solve<P: NlpProblem>(problem: &P, z0: &[f64], settings: &SolverSettings) -> NlpSolution {
    let (lower, upper) = problem.bounds();
    let mut z = z0.to_vec();
    project(&mut z, lower, upper);

    let (m_eq, m_in) = (problem.n_eq(), problem.n_ineq());
    let mut lambda = vec![0.0; m_eq];
    let mut mu = vec![0.0; m_in];
    let mut rho = settings.penalty_init;
    let mut inner_tol = 1e-2_f64.max(settings.step_tol);
    let mut prev_violation = f64::INFINITY;
    let mut total_inner = 0;
    let mut log = Vec::new();
    let mut c = vec![0.0; m_eq];
    let mut g = vec![0.0; m_in];
    let mut best: Option<(bool, f64, f64, Vec<f64>, Vec<f64>, Vec<f64>, KktReport)> = None;
    let mut status = SolveStatus::MaxIter;
    let mut stagnant = 0;

    for outer in 0..settings.max_outer {
        let inner = InnerSettings {
            max_iter: settings.max_inner,
            tol: inner_tol,
            memory: settings.memory,
            ..InnerSettings::default()
        };
        let report = {
            let sub = Subproblem { problem, lambda: &lambda, mu: &mu, rho };
            match problem.hessian_bandwidth() {
                Some(band) => {
                    let newton = NewtonSettings { max_iter: settings.max_inner, tol: inner_tol, ..Default::default() };
                    minimize_box_banded(&sub, &mut z, lower, upper, band, &newton)
                }
                None => minimize_box(&sub, &mut z, lower, upper, &inner),
            }
        };
        total_inner += report.iterations;

        problem.eq_constraints(&z, &mut c);
        problem.ineq_constraints(&z, &mut g);
        let eq_violation = inf_norm(&c);
        let shifted_ineq = g.iter().zip(&mu).fold(0.0, |acc: f64, (g, m)| acc.max(g.max(-m / rho).abs()));
        let violation = eq_violation.max(shifted_ineq);

        for (l, ci) in lambda.iter_mut().zip(&c) {
            *l = (*l + rho * ci).clamp(-MULTIPLIER_CAP, MULTIPLIER_CAP);
        }
        for (m, gi) in mu.iter_mut().zip(&g) {
            *m = (*m + rho * gi).clamp(0.0, MULTIPLIER_CAP);
        }

        let mut kkt = kkt_check(problem, &z, &lambda, &mu);
        kkt.iterations = total_inner;
        let objective = problem.objective(&z);
        let entry = IterationLog {
            outer,
            inner_iterations: report.iterations,
            objective,
            eq_violation: kkt.eq_violation,
            ineq_violation: kkt.ineq_violation,
            stationarity: kkt.stationarity,
            penalty: rho,
        };
        info!(
            "outer {:3} inner {:5} ({:?}) f {:.9e} eq {:.3e} ineq {:.3e} stat {:.3e} rho {:.1e}",
            outer, report.iterations, report.status, objective, kkt.eq_violation, kkt.ineq_violation,
            kkt.stationarity, rho
        );
        log.push(entry);

        let feasible = kkt.eq_violation <= settings.eq_tol && kkt.ineq_violation <= settings.ineq_tol;
        let infeas = kkt.eq_violation.max(kkt.ineq_violation);
        let better = match &best {
            None => true,
            Some((bf, bobj, binf, ..)) => match (feasible, *bf) {
                (true, false) => true,
                (false, true) => false,
                (true, true) => objective <= *bobj,
                (false, false) => infeas <= *binf,
            },
        };
        if better {
            best = Some((feasible, objective, infeas, z.clone(), lambda.clone(), mu.clone(), kkt));
        }

        if is_converged(&kkt, settings) {
            status = SolveStatus::Converged;
            best = Some((true, objective, infeas, z.clone(), lambda.clone(), mu.clone(), kkt));
            break;
        }

        let tol = settings.eq_tol.min(settings.ineq_tol);
        if violation > 0.25 * prev_violation && violation > tol {
            if rho >= PENALTY_CEILING {
                stagnant += 1;
                if stagnant >= 2 {
                    status = SolveStatus::Infeasible;
                    break;
                }
            }
            rho = (rho * settings.penalty_growth).min(PENALTY_CEILING * settings.penalty_growth);
            debug!("penalty raised to {rho:.1e}");
        } else {
            stagnant = 0;
        }
        prev_violation = violation;
        if report.status != InnerStatus::MaxIter || report.projected_gradient <= 10.0 * inner_tol {
            inner_tol = (inner_tol * 0.1).max(settings.step_tol);
        }
    }

    let (_, objective, _, z, eq_multipliers, ineq_multipliers, kkt) = best.expect("at least one outer iteration");
    NlpSolution { z, objective, eq_multipliers, ineq_multipliers, status, kkt, log }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// min x^2 s.t. x = 3
    struct PinnedSquare {
        lower: Vec<f64>,
        upper: Vec<f64>,
    }

    impl NlpProblem for PinnedSquare {
        fn n_vars(&self) -> usize {
            1
        }
        fn n_eq(&self) -> usize {
            1
        }
        fn bounds(&self) -> (&[f64], &[f64]) {
            (&self.lower, &self.upper)
        }
        fn objective(&self, z: &[f64]) -> f64 {
            z[0] * z[0]
        }
        fn eq_constraints(&self, z: &[f64], out: &mut [f64]) {
            out[0] = z[0] - 3.0;
        }
    }

    /// min (x-2)^2 + (y-1)^2 s.t. x + y <= 2, which is active at (1.5, 0.5)
    struct HalfPlane {
        lower: Vec<f64>,
        upper: Vec<f64>,
    }

    impl NlpProblem for HalfPlane {
        fn n_vars(&self) -> usize {
            2
        }
        fn n_eq(&self) -> usize {
            0
        }
        fn n_ineq(&self) -> usize {
            1
        }
        fn bounds(&self) -> (&[f64], &[f64]) {
            (&self.lower, &self.upper)
        }
        fn objective(&self, z: &[f64]) -> f64 {
            (z[0] - 2.0).powi(2) + (z[1] - 1.0).powi(2)
        }
        fn eq_constraints(&self, _z: &[f64], _out: &mut [f64]) {}
        fn ineq_constraints(&self, z: &[f64], out: &mut [f64]) {
            out[0] = z[0] + z[1] - 2.0;
        }
    }

    #[test]
    fn equality_only_with_multiplier() {
        let p = PinnedSquare { lower: vec![-10.0], upper: vec![10.0] };
        let sol = solve(&p, &[0.0], &SolverSettings::default());
        assert_eq!(sol.status, SolveStatus::Converged);
        assert_abs_diff_eq!(sol.z[0], 3.0, epsilon = 1e-6);
        assert_abs_diff_eq!(sol.eq_multipliers[0], -6.0, epsilon = 1e-4);
    }

    #[test]
    fn active_inequality() {
        let p = HalfPlane { lower: vec![-10.0; 2], upper: vec![10.0; 2] };
        let sol = solve(&p, &[0.0, 0.0], &SolverSettings::default());
        assert_eq!(sol.status, SolveStatus::Converged);
        assert_abs_diff_eq!(sol.z[0], 1.5, epsilon = 1e-5);
        assert_abs_diff_eq!(sol.z[1], 0.5, epsilon = 1e-5);
        assert_abs_diff_eq!(sol.ineq_multipliers[0], 1.0, epsilon = 1e-4);
        assert!(sol.kkt.complementarity <= 1e-5);
    }

    #[test]
    fn inactive_inequality_has_zero_complementarity() {
        let p = HalfPlane { lower: vec![-10.0; 2], upper: vec![10.0; 2] };
        let k = kkt_check(&p, &[0.0, 0.0], &[], &[0.0]);
        assert_eq!(k.complementarity, 0.0);
        assert_eq!(k.ineq_violation, 0.0);
    }

    #[test]
    fn infeasible_box_is_reported() {
        // x = 3 cannot be met inside [-1, 1]
        let p = PinnedSquare { lower: vec![-1.0], upper: vec![1.0] };
        let settings = SolverSettings { max_outer: 40, ..Default::default() };
        let sol = solve(&p, &[0.0], &settings);
        assert_ne!(sol.status, SolveStatus::Converged);
        assert_eq!(sol.z[0], 1.0);
    }

    #[test]
    fn deterministic_iterates() {
        let p = HalfPlane { lower: vec![-10.0; 2], upper: vec![10.0; 2] };
        let a = solve(&p, &[0.3, -0.2], &SolverSettings::default());
        let b = solve(&p, &[0.3, -0.2], &SolverSettings::default());
        assert_eq!(a.z.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.z.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        assert_eq!(a.log.len(), b.log.len());
    }

    #[test]
    fn settings_validation() {
        assert!(SolverSettings::default().validate().is_ok());
        let bad = SolverSettings { penalty_growth: 1.0, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
