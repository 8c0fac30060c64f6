//! Projected limited-memory BFGS for box-constrained minimization.
//!
//! The quasi-Newton direction is built on the free variables only (those not
//! pinned at a bound by the gradient) and the step follows the projection arc
//! `P(x + t d)` with Armijo backtracking.

use std::collections::VecDeque;

use super::{inf_norm, project};

/// Smooth function minimized by [`minimize_box`].
pub trait BoxObjective {
    fn value(&self, x: &[f64]) -> f64;
    /// Writes the gradient into `grad` and returns the value.
    fn value_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerSettings {
    pub max_iter: usize,
    /// Stop once the projected gradient infinity norm is below this.
    pub tol: f64,
    pub memory: usize,
    /// Sufficient-decrease constant.
    pub armijo: f64,
    /// Relative decrease below which an iteration counts as stalled.
    pub stall_rel: f64,
}

impl Default for InnerSettings {
    fn default() -> Self {
        Self { max_iter: 500, tol: 1e-7, memory: 10, armijo: 1e-4, stall_rel: 1e-12 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnerStatus {
    Converged,
    MaxIter,
    Stalled,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerReport {
    pub status: InnerStatus,
    pub iterations: usize,
    pub value: f64,
    pub projected_gradient: f64,
}

const MAX_BACKTRACKS: usize = 60;
const STALL_LIMIT: usize = 3;

/// Infinity norm of `P(x - g) - x`.
pub fn projected_gradient_norm(x: &[f64], g: &[f64], lower: &[f64], upper: &[f64]) -> f64 {
    let mut m: f64 = 0.0;
    for i in 0..x.len() {
        let step = (x[i] - g[i]).clamp(lower[i], upper[i]) - x[i];
        m = m.max(step.abs());
    }
    m
}

fn free_mask(x: &[f64], g: &[f64], lower: &[f64], upper: &[f64]) -> Vec<bool> {
    (0..x.len())
        .map(|i| {
            let at_lower = x[i] <= lower[i] && g[i] > 0.0;
            let at_upper = x[i] >= upper[i] && g[i] < 0.0;
            !(at_lower || at_upper || lower[i] == upper[i])
        })
        .collect()
}

fn masked_dot(a: &[f64], b: &[f64], free: &[bool]) -> f64 {
    a.iter().zip(b).zip(free).filter(|(_, f)| **f).map(|((x, y), _)| x * y).sum()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Pair {
    s: Vec<f64>,
    y: Vec<f64>,
}

/// Two-loop recursion restricted to the free variables.
fn direction(g: &[f64], free: &[bool], memory: &VecDeque<Pair>) -> Vec<f64> {
    let mut q: Vec<f64> = g.iter().zip(free).map(|(v, f)| if *f { *v } else { 0.0 }).collect();
    let mut alphas = Vec::with_capacity(memory.len());
    let mut rhos = Vec::with_capacity(memory.len());
    for pair in memory.iter().rev() {
        let sy = masked_dot(&pair.s, &pair.y, free);
        let rho = if sy > 0.0 { 1.0 / sy } else { 0.0 };
        let a = rho * masked_dot(&pair.s, &q, free);
        for i in 0..q.len() {
            if free[i] {
                q[i] -= a * pair.y[i];
            }
        }
        alphas.push(a);
        rhos.push(rho);
    }
    if let Some(last) = memory.back() {
        let sy = dot(&last.s, &last.y);
        let yy = dot(&last.y, &last.y);
        if sy > 0.0 && yy > 0.0 {
            let gamma = sy / yy;
            q.iter_mut().for_each(|v| *v *= gamma);
        }
    }
    for (k, pair) in memory.iter().enumerate() {
        let back = memory.len() - 1 - k;
        let b = rhos[back] * masked_dot(&pair.y, &q, free);
        for i in 0..q.len() {
            if free[i] {
                q[i] += pair.s[i] * (alphas[back] - b);
            }
        }
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

/// Minimizes `obj` over the box starting from `x` (projected first), leaving
/// the final iterate in `x`.
pub fn minimize_box<O: BoxObjective + ?Sized>(
    obj: &O,
    x: &mut [f64],
    lower: &[f64],
    upper: &[f64],
    settings: &InnerSettings,
) -> InnerReport {
    let n = x.len();
    project(x, lower, upper);
    let mut g = vec![0.0; n];
    let mut f = obj.value_and_gradient(x, &mut g);
    let mut memory: VecDeque<Pair> = VecDeque::with_capacity(settings.memory);
    let mut stalls = 0;
    let mut g_new = vec![0.0; n];
    let mut trial = vec![0.0; n];

    for it in 0..settings.max_iter {
        let pg = projected_gradient_norm(x, &g, lower, upper);
        if pg <= settings.tol {
            return InnerReport { status: InnerStatus::Converged, iterations: it, value: f, projected_gradient: pg };
        }
        let free = free_mask(x, &g, lower, upper);
        let mut d = direction(&g, &free, &memory);
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            memory.clear();
            d = g.iter().zip(&free).map(|(v, f)| if *f { -v } else { 0.0 }).collect();
            slope = dot(&g, &d);
            if !(slope < 0.0) {
                return InnerReport { status: InnerStatus::Converged, iterations: it, value: f, projected_gradient: pg };
            }
        }

        let mut t = if memory.is_empty() { (1.0 / inf_norm(&d)).min(1.0) } else { 1.0 };
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            for i in 0..n {
                trial[i] = (x[i] + t * d[i]).clamp(lower[i], upper[i]);
            }
            let predicted: f64 = (0..n).map(|i| g[i] * (trial[i] - x[i])).sum();
            if predicted < 0.0 {
                let ft = obj.value(&trial);
                if ft.is_finite() && ft <= f + settings.armijo * predicted {
                    accepted = Some(ft);
                    break;
                }
            }
            t *= 0.5;
        }

        let Some(_) = accepted else {
            if memory.is_empty() {
                return InnerReport { status: InnerStatus::Stalled, iterations: it, value: f, projected_gradient: pg };
            }
            memory.clear();
            continue;
        };

        let f_new = obj.value_and_gradient(&trial, &mut g_new);
        let s: Vec<f64> = (0..n).map(|i| trial[i] - x[i]).collect();
        let y: Vec<f64> = (0..n).map(|i| g_new[i] - g[i]).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).max(f64::MIN_POSITIVE) {
            if memory.len() == settings.memory {
                memory.pop_front();
            }
            memory.push_back(Pair { s, y });
        }

        if f - f_new <= settings.stall_rel * f.abs() {
            stalls += 1;
        } else {
            stalls = 0;
        }
        x.copy_from_slice(&trial);
        std::mem::swap(&mut g, &mut g_new);
        f = f_new;
        if stalls >= STALL_LIMIT {
            let pg = projected_gradient_norm(x, &g, lower, upper);
            return InnerReport { status: InnerStatus::Stalled, iterations: it + 1, value: f, projected_gradient: pg };
        }
    }
    let pg = projected_gradient_norm(x, &g, lower, upper);
    let status = if pg <= settings.tol { InnerStatus::Converged } else { InnerStatus::MaxIter };
    InnerReport { status, iterations: settings.max_iter, value: f, projected_gradient: pg }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    struct Quadratic {
        diag: Vec<f64>,
        target: Vec<f64>,
    }

    impl BoxObjective for Quadratic {
        fn value(&self, x: &[f64]) -> f64 {
            x.iter().zip(&self.diag).zip(&self.target).map(|((x, d), t)| 0.5 * d * (x - t).powi(2)).sum()
        }
        fn value_and_gradient(&self, x: &[f64], g: &mut [f64]) -> f64 {
            for i in 0..x.len() {
                g[i] = self.diag[i] * (x[i] - self.target[i]);
            }
            self.value(x)
        }
    }

    struct Rosenbrock;

    impl BoxObjective for Rosenbrock {
        fn value(&self, x: &[f64]) -> f64 {
            (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
        }
        fn value_and_gradient(&self, x: &[f64], g: &mut [f64]) -> f64 {
            g[0] = -2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] * x[0]);
            g[1] = 200.0 * (x[1] - x[0] * x[0]);
            self.value(x)
        }
    }

    #[test]
    fn unconstrained_quadratic_hits_minimizer() {
        let q = Quadratic { diag: vec![1.0, 10.0, 100.0, 0.5], target: vec![0.3, -0.7, 2.0, 1.0] };
        let mut x = vec![0.0; 4];
        let big = vec![1e3; 4];
        let small = vec![-1e3; 4];
        let settings = InnerSettings { tol: 1e-10, ..Default::default() };
        let r = minimize_box(&q, &mut x, &small, &big, &settings);
        assert_eq!(r.status, InnerStatus::Converged);
        for i in 0..4 {
            assert_abs_diff_eq!(x[i], q.target[i], epsilon = 1e-8);
        }
    }

    #[test]
    fn active_bounds_are_respected() {
        let q = Quadratic { diag: vec![1.0, 4.0], target: vec![3.0, -3.0] };
        let mut x = vec![0.5, 0.5];
        let r = minimize_box(&q, &mut x, &[-1.0, -1.0], &[1.0, 1.0], &InnerSettings::default());
        assert_eq!(r.status, InnerStatus::Converged);
        assert_eq!(x, vec![1.0, -1.0]);
    }

    #[test]
    fn rosenbrock_in_a_box() {
        let mut x = vec![-1.2, 1.0];
        let settings = InnerSettings { max_iter: 2000, tol: 1e-9, ..Default::default() };
        let r = minimize_box(&Rosenbrock, &mut x, &[-2.0, -2.0], &[2.0, 2.0], &settings);
        assert_eq!(r.status, InnerStatus::Converged);
        assert_abs_diff_eq!(x[0], 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(x[1], 1.0, epsilon = 1e-6);

        let mut x = vec![-1.2, 1.0];
        minimize_box(&Rosenbrock, &mut x, &[-2.0, -2.0], &[0.5, 2.0], &settings);
        assert_eq!(x[0], 0.5);
        assert_abs_diff_eq!(x[1], 0.25, epsilon = 1e-6);
    }

    #[test]
    fn fixed_variables_stay_put() {
        let q = Quadratic { diag: vec![1.0, 1.0], target: vec![5.0, 5.0] };
        let mut x = vec![0.2, 0.0];
        minimize_box(&q, &mut x, &[0.2, -10.0], &[0.2, 10.0], &InnerSettings::default());
        assert_eq!(x[0], 0.2);
        assert_abs_diff_eq!(x[1], 5.0, epsilon = 1e-7);
    }
}
