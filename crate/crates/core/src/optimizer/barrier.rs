//! Log-barrier Newton solver for
//!
//! ```text
//! maximize  α Σ ln(1 + y_j) - cᵀy   subject to  A y <= r
//! ```
//!
//! followed by an active-set Newton polish on the KKT system, which brings the
//! answer to machine precision. Rows of `A` are expected to be scaled to unit
//! size by the caller.

use nalgebra::{DMatrix, DVector};

use crate::numerics::{solve_lp, LpProblem, LpStatus};

const GAP_TOL: f64 = 1e-11;
const BARRIER_GROWTH: f64 = 20.0;
const NEWTON_TOL: f64 = 1e-13;
const MAX_CENTERING_STEPS: usize = 200;
const MAX_POLISH_STEPS: usize = 30;
/// Smallest Phase I margin treated as a usable interior.
const MIN_INTERIOR: f64 = 1e-12;

#[derive(Debug, Clone)]
pub(crate) struct SeparableProblem {
    pub alpha: f64,
    pub c: DVector<f64>,
    pub a: DMatrix<f64>,
    pub r: DVector<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct SeparableSolution {
    pub y: DVector<f64>,
    /// One multiplier per row of `A`.
    pub nu: DVector<f64>,
}

impl SeparableProblem {
    pub fn objective(&self, y: &DVector<f64>) -> f64 {
        self.alpha * y.iter().map(|v| v.ln_1p()).sum::<f64>() - self.c.dot(y)
    }

    /// `None` when the constraints have no feasible point with `y >= 0`.
    pub fn solve(&self) -> Option<SeparableSolution> {
        let n = self.c.len();
        let m = self.r.len();
        let (start, margin) = self.phase_one()?;
        if margin < MIN_INTERIOR {
            // feasible set without interior: the Phase I point is all there is
            return Some(SeparableSolution { y: start, nu: DVector::zeros(m) });
        }
        if n == 0 {
            return Some(SeparableSolution { y: start, nu: DVector::zeros(m) });
        }

        let mut y = start;
        let mut t = 1.0;
        loop {
            self.center(&mut y, t);
            if m as f64 / t < GAP_TOL * (1.0 + self.objective(&y).abs()) || t > 1e30 {
                break;
            }
            t *= BARRIER_GROWTH;
        }
        let s = &self.r - &self.a * &y;
        let nu = s.map(|v| 1.0 / (t * v));
        let barrier = SeparableSolution { y, nu };
        Some(self.polish(&barrier).unwrap_or(barrier))
    }

    /// Maximizes the common margin `τ <= 1` in `A y + τ 1 <= r`.
    fn phase_one(&self) -> Option<(DVector<f64>, f64)> {
        let n = self.c.len();
        let m = self.r.len();
        let mut objective = DVector::zeros(n + 1);
        objective[n] = 1.0;
        let mut a = DMatrix::zeros(m, n + 1);
        a.view_mut((0, 0), (m, n)).copy_from(&self.a);
        a.column_mut(n).fill(1.0);
        let mut lp = LpProblem::new(objective, a, self.r.clone());
        lp.bounds[n] = (0.0, 1.0);
        let sol = solve_lp(&lp);
        if sol.status != LpStatus::Optimal {
            return None;
        }
        Some((sol.x.rows(0, n).into_owned(), sol.x[n]))
    }

    fn center(&self, y: &mut DVector<f64>, t: f64) {
        let alpha = self.alpha;
        for _ in 0..MAX_CENTERING_STEPS {
            let s = &self.r - &self.a * &*y;
            let inv_s = s.map(|v| 1.0 / v);
            let grad = -(y.map(|v| alpha / (1.0 + v)) - &self.c) * t + self.a.transpose() * &inv_s;
            let weighted = DMatrix::from_fn(self.a.nrows(), self.a.ncols(), |r, c| self.a[(r, c)] * inv_s[r]);
            let mut hess = weighted.transpose() * &weighted;
            for j in 0..y.len() {
                hess[(j, j)] += t * alpha / (1.0 + y[j]).powi(2);
            }
            let Some(dy) = scaled_solve(&hess, &(-&grad)) else { return };
            let decrement = -grad.dot(&dy);
            if !(decrement > 2.0 * NEWTON_TOL) {
                return;
            }

            let ady = &self.a * &dy;
            let mut step: f64 = 1.0;
            for r in 0..s.len() {
                if ady[r] > 0.0 {
                    step = step.min(0.99 * s[r] / ady[r]);
                }
            }
            for j in 0..y.len() {
                if dy[j] < 0.0 {
                    step = step.min(0.99 * (1.0 + y[j]) / -dy[j]);
                }
            }
            // Armijo on the barrier, with differences formed from ratios to
            // avoid cancellation near the center.
            let change = |tau: f64| {
                let obj: f64 = (0..y.len()).map(|j| alpha * (tau * dy[j] / (1.0 + y[j])).ln_1p()).sum::<f64>()
                    - tau * self.c.dot(&dy);
                let bar: f64 = (0..s.len()).map(|r| (-tau * ady[r] / s[r]).ln_1p()).sum();
                -t * obj - bar
            };
            while change(step) > -0.25 * step * decrement {
                step *= 0.5;
                if step < 1e-16 {
                    return;
                }
            }
            *y += dy * step;
        }
    }

    /// Newton on the KKT equations with the barrier's active set held fixed.
    /// Returns `None` if the result is not a valid KKT point.
    fn polish(&self, start: &SeparableSolution) -> Option<SeparableSolution> {
        let n = self.c.len();
        let s = &self.r - &self.a * &start.y;
        let active: Vec<usize> = (0..s.len()).filter(|&r| start.nu[r] > s[r]).collect();
        let k = active.len();
        if k > n {
            return None;
        }
        let a_act = DMatrix::from_fn(k, n, |i, j| self.a[(active[i], j)]);
        let r_act = DVector::from_fn(k, |i, _| self.r[active[i]]);

        let mut y = start.y.clone();
        let mut nu = DVector::from_fn(k, |i, _| start.nu[active[i]]);
        let residual = |y: &DVector<f64>, nu: &DVector<f64>| {
            let stat = y.map(|v| self.alpha / (1.0 + v)) - &self.c - a_act.transpose() * nu;
            let feas = &a_act * y - &r_act;
            let mut out = DVector::zeros(n + k);
            out.rows_mut(0, n).copy_from(&stat);
            out.rows_mut(n, k).copy_from(&feas);
            out
        };
        let mut res = residual(&y, &nu);
        for _ in 0..MAX_POLISH_STEPS {
            let norm = res.amax();
            if norm == 0.0 {
                break;
            }
            let mut jac = DMatrix::zeros(n + k, n + k);
            for j in 0..n {
                jac[(j, j)] = -self.alpha / (1.0 + y[j]).powi(2);
            }
            jac.view_mut((0, n), (n, k)).copy_from(&(-a_act.transpose()));
            jac.view_mut((n, 0), (k, n)).copy_from(&a_act);
            let step = jac.lu().solve(&(-&res))?;
            let y_next = &y + step.rows(0, n);
            let nu_next = &nu + step.rows(n, k);
            if y_next.iter().any(|v| !(*v > -1.0)) {
                return None;
            }
            let res_next = residual(&y_next, &nu_next);
            if !(res_next.amax() < norm) {
                break;
            }
            y = y_next;
            nu = nu_next;
            res = res_next;
        }

        let nu_scale = 1.0 + nu.amax();
        if nu.iter().any(|v| *v < -1e-10 * nu_scale) {
            return None;
        }
        let slack = &self.r - &self.a * &y;
        if slack.iter().any(|v| *v < -1e-12) {
            return None;
        }
        if self.objective(&y) < self.objective(&start.y) - 1e-12 * (1.0 + self.objective(&start.y).abs()) {
            return None;
        }
        let mut full = DVector::zeros(self.r.len());
        for (i, &row) in active.iter().enumerate() {
            full[row] = nu[i].max(0.0);
        }
        Some(SeparableSolution { y, nu: full })
    }
}

/// Solves `H x = b` for symmetric positive definite `H` after Jacobi scaling.
fn scaled_solve(h: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let scale = h.diagonal().map(|v| 1.0 / v.sqrt());
    if scale.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let scaled = DMatrix::from_fn(h.nrows(), h.ncols(), |i, j| h[(i, j)] * scale[i] * scale[j]);
    let chol = scaled.cholesky()?;
    let z = chol.solve(&b.component_mul(&scale));
    Some(z.component_mul(&scale))
}
