//! Projected Newton iteration for box-constrained problems whose Hessian is
//! banded.
//!
//! The Hessian is estimated by central differences of the gradient, probing
//! every `2b + 1`-th coordinate at once (columns that far apart have disjoint
//! row supports), and factored with a banded Cholesky after an adaptive
//! diagonal shift. Variables at or within `eps` of a bound with the gradient
//! pointing outward are held out of the Newton system and moved by plain
//! gradient steps, as in Bertsekas' projected Newton method.

use super::lbfgs::{projected_gradient_norm, BoxObjective, InnerReport, InnerStatus};
use log::trace;

use crate::par;

const MAX_BACKTRACKS: usize = 40;
const MAX_SHIFTS: usize = 40;
const STALL_LIMIT: usize = 3;
/// Relative central-difference step for the Hessian columns.
const HESSIAN_STEP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonSettings {
    pub max_iter: usize,
    pub tol: f64,
    pub armijo: f64,
    pub stall_rel: f64,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        Self { max_iter: 200, tol: 1e-7, armijo: 1e-4, stall_rel: 1e-14 }
    }
}

/// Symmetric band matrix, lower triangle stored row by row.
#[derive(Debug, Clone)]
struct Band {
    n: usize,
    b: usize,
    data: Vec<f64>,
}

impl Band {
    fn zeros(n: usize, b: usize) -> Self {
        Self { n, b, data: vec![0.0; n * (b + 1)] }
    }

    /// Entry `(i, j)` with `j <= i <= j + b`.
    fn at(&mut self, i: usize, j: usize) -> &mut f64 {
        &mut self.data[i * (self.b + 1) + (i - j)]
    }

    fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * (self.b + 1) + (i - j)]
    }

    fn max_abs_diagonal(&self) -> f64 {
        (0..self.n).fold(0.0, |m, i| m.max(self.get(i, i).abs()))
    }

    /// Solves `(A + shift I) x = rhs` in place, or `None` when the shifted
    /// matrix is not positive definite.
    fn shifted_solve(&self, shift: f64, rhs: &[f64]) -> Option<Vec<f64>> {
        let (n, b) = (self.n, self.b);
        let mut l = self.clone();
        for j in 0..n {
            let lo = j.saturating_sub(b);
            let mut d = l.get(j, j) + shift;
            for k in lo..j {
                d -= l.get(j, k) * l.get(j, k);
            }
            if !(d > 0.0) || !d.is_finite() {
                return None;
            }
            let d = d.sqrt();
            *l.at(j, j) = d;
            for i in j + 1..(j + b + 1).min(n) {
                let lo = i.saturating_sub(b);
                let mut s = l.get(i, j);
                for k in lo..j {
                    s -= l.get(i, k) * l.get(j, k);
                }
                *l.at(i, j) = s / d;
            }
        }
        let mut x = rhs.to_vec();
        for i in 0..n {
            let lo = i.saturating_sub(b);
            let mut s = x[i];
            for k in lo..i {
                s -= l.get(i, k) * x[k];
            }
            x[i] = s / l.get(i, i);
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..(i + b + 1).min(n) {
                s -= l.get(k, i) * x[k];
            }
            x[i] = s / l.get(i, i);
        }
        Some(x)
    }
}

fn banded_hessian<O: BoxObjective + Sync + ?Sized>(obj: &O, x: &[f64], b: usize) -> Band {
    let n = x.len();
    let colors = (2 * b + 1).min(n);
    let steps: Vec<f64> = x.iter().map(|v| HESSIAN_STEP * v.abs().max(1.0)).collect();
    let columns = par::map_indexed(colors, 1, |c| {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        for j in (c..n).step_by(colors) {
            xp[j] += steps[j];
            xm[j] -= steps[j];
        }
        let mut gp = vec![0.0; n];
        let mut gm = vec![0.0; n];
        obj.value_and_gradient(&xp, &mut gp);
        obj.value_and_gradient(&xm, &mut gm);
        gp.iter().zip(&gm).map(|(p, m)| p - m).collect::<Vec<f64>>()
    });
    // full-band estimate, then symmetrized into the lower triangle
    let width = 2 * b + 1;
    let mut full = vec![0.0; n * width];
    for (c, diff) in columns.iter().enumerate() {
        for j in (c..n).step_by(colors) {
            let lo = j.saturating_sub(b);
            let hi = (j + b).min(n - 1);
            for i in lo..=hi {
                full[i * width + (i + b - j)] = diff[i] / (2.0 * steps[j]);
            }
        }
    }
    let mut h = Band::zeros(n, b);
    for i in 0..n {
        for j in i.saturating_sub(b)..=i {
            let hij = full[i * width + (i + b - j)];
            let hji = full[j * width + (j + b - i)];
            *h.at(i, j) = 0.5 * (hij + hji);
        }
    }
    h
}

/// Minimizes `obj` over the box from `x`, whose Hessian has half-bandwidth
/// `half_band`. The final iterate is left in `x`.
pub fn minimize_box_banded<O: BoxObjective + Sync + ?Sized>(
    obj: &O,
    x: &mut [f64],
    lower: &[f64],
    upper: &[f64],
    half_band: usize,
    settings: &NewtonSettings,
) -> InnerReport {
    let n = x.len();
    super::project(x, lower, upper);
    let mut g = vec![0.0; n];
    let mut f = obj.value_and_gradient(x, &mut g);
    let mut shift = 0.0_f64;
    let mut stalls = 0;
    let mut trial = vec![0.0; n];

    for it in 0..settings.max_iter {
        let pg = projected_gradient_norm(x, &g, lower, upper);
        if pg <= settings.tol {
            return InnerReport { status: InnerStatus::Converged, iterations: it, value: f, projected_gradient: pg };
        }
        let eps = pg.min(1e-3);
        let held: Vec<bool> = (0..n)
            .map(|i| {
                lower[i] == upper[i]
                    || (x[i] - lower[i] <= eps && g[i] > 0.0)
                    || (upper[i] - x[i] <= eps && g[i] < 0.0)
            })
            .collect();

        let mut h = banded_hessian(obj, x, half_band);
        for i in 0..n {
            if held[i] {
                for j in i.saturating_sub(half_band)..i {
                    *h.at(i, j) = 0.0;
                }
                for k in i + 1..(i + half_band + 1).min(n) {
                    *h.at(k, i) = 0.0;
                }
                *h.at(i, i) = 1.0;
            }
        }
        let rhs: Vec<f64> = (0..n).map(|i| if held[i] { 0.0 } else { -g[i] }).collect();
        let scale = h.max_abs_diagonal().max(1.0);

        let mut accepted = None;
        for _ in 0..MAX_SHIFTS {
            let Some(mut d) = h.shifted_solve(shift, &rhs) else {
                shift = (shift * 10.0).max(1e-10 * scale);
                continue;
            };
            for i in 0..n {
                if held[i] {
                    d[i] = -g[i];
                }
            }
            let mut t = 1.0;
            for _ in 0..MAX_BACKTRACKS {
                for i in 0..n {
                    trial[i] = (x[i] + t * d[i]).clamp(lower[i], upper[i]);
                }
                let predicted: f64 = (0..n).map(|i| g[i] * (trial[i] - x[i])).sum();
                if predicted < 0.0 {
                    let ft = obj.value(&trial);
                    if ft.is_finite() && ft <= f + settings.armijo * predicted {
                        accepted = Some(t);
                        break;
                    }
                }
                t *= 0.5;
            }
            if accepted.is_some() {
                break;
            }
            shift = (shift * 10.0).max(1e-8 * scale);
        }
        let Some(t) = accepted else {
            return InnerReport { status: InnerStatus::Stalled, iterations: it, value: f, projected_gradient: pg };
        };
        trace!("newton {it} f {f:.12e} pg {pg:.3e} step {t:.3e} shift {shift:.3e}");
        if t == 1.0 {
            shift = if shift < 1e-12 * scale { 0.0 } else { shift * 0.1 };
        }

        let f_new = obj.value_and_gradient(&trial, &mut g);
        if f - f_new <= settings.stall_rel * f.abs() {
            stalls += 1;
        } else {
            stalls = 0;
        }
        x.copy_from_slice(&trial);
        f = f_new;
        if stalls >= STALL_LIMIT {
            let pg = projected_gradient_norm(x, &g, lower, upper);
            let status = if pg <= settings.tol { InnerStatus::Converged } else { InnerStatus::Stalled };
            return InnerReport { status, iterations: it + 1, value: f, projected_gradient: pg };
        }
    }
    let pg = projected_gradient_norm(x, &g, lower, upper);
    let status = if pg <= settings.tol { InnerStatus::Converged } else { InnerStatus::MaxIter };
    InnerReport { status, iterations: settings.max_iter, value: f, projected_gradient: pg }
}
