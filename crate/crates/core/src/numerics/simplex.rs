//! Dense two-phase primal simplex.

use nalgebra::{DMatrix, DVector};

/// Entries below this magnitude are never used as pivots.
pub const PIVOT_TOL: f64 = 1e-10;
/// Consecutive degenerate pivots before switching to Bland's rule.
pub const BLAND_AFTER: usize = 50;
const MAX_PIVOTS: usize = 50_000;

/// `maximize cᵀx  s.t.  A x <= b,  lo <= x <= hi`.
#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem {
    pub objective: DVector<f64>,
    pub ineq_a: DMatrix<f64>,
    pub ineq_b: DVector<f64>,
    /// Per-variable `(lo, hi)`; `lo >= 0`, `hi` may be `f64::INFINITY`.
    pub bounds: Vec<(f64, f64)>,
}

impl LpProblem {
    /// Nonnegative variables with no upper bound.
    pub fn new(objective: DVector<f64>, ineq_a: DMatrix<f64>, ineq_b: DVector<f64>) -> Self {
        let n = objective.len();
        Self { objective, ineq_a, ineq_b, bounds: vec![(0.0, f64::INFINITY); n] }
    }

    fn well_formed(&self) -> bool {
        let n = self.objective.len();
        self.ineq_a.ncols() == n
            && self.ineq_a.nrows() == self.ineq_b.len()
            && self.bounds.len() == n
            && self.objective.iter().chain(self.ineq_a.iter()).chain(self.ineq_b.iter()).all(|v| v.is_finite())
            && self.bounds.iter().all(|&(lo, hi)| lo.is_finite() && lo >= 0.0 && !hi.is_nan())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// Only reachable on malformed input or a pivot-count blowup.
    Failed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: DVector<f64>,
    pub objective: f64,
    pub status: LpStatus,
}

impl LpSolution {
    fn without_point(n: usize, status: LpStatus) -> Self {
        Self { x: DVector::from_element(n, f64::NAN), objective: f64::NAN, status }
    }
}

struct Tableau {
    /// Row-major, `rows x (cols + 1)`; the last column is the right-hand side.
    data: Vec<f64>,
    rows: usize,
    cols: usize,
    basis: Vec<usize>,
}

impl Tableau {
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * (self.cols + 1) + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.at(r, self.cols)
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let width = self.cols + 1;
        let p = self.at(row, col);
        for c in 0..width {
            self.data[row * width + c] /= p;
        }
        for r in 0..self.rows {
            if r == row {
                continue;
            }
            let factor = self.at(r, col);
            if factor == 0.0 {
                continue;
            }
            for c in 0..width {
                let v = self.data[row * width + c];
                self.data[r * width + c] -= factor * v;
            }
            self.data[r * width + col] = 0.0;
        }
        self.basis[row] = col;
    }

    fn objective(&self, cost: &[f64]) -> f64 {
        (0..self.rows).map(|r| cost[self.basis[r]] * self.rhs(r)).sum()
    }

    /// Maximizes `costᵀz` over the current tableau, only letting columns with
    /// `allowed[c]` enter. Returns `false` if the objective is unbounded.
    fn optimize(&mut self, cost: &[f64], allowed: &[bool]) -> Option<bool> {
        let mut degenerate_run = 0usize;
        let mut in_basis = vec![false; self.cols];
        for &b in &self.basis {
            in_basis[b] = true;
        }
        for _ in 0..MAX_PIVOTS {
            let bland = degenerate_run >= BLAND_AFTER;
            let mut entering = None;
            let mut best = 0.0;
            for c in 0..self.cols {
                if !allowed[c] || in_basis[c] {
                    continue;
                }
                let reduced = cost[c] - (0..self.rows).map(|r| cost[self.basis[r]] * self.at(r, c)).sum::<f64>();
                if reduced > PIVOT_TOL && (entering.is_none() || (!bland && reduced > best)) {
                    entering = Some(c);
                    best = reduced;
                    if bland {
                        break;
                    }
                }
            }
            let Some(col) = entering else { return Some(true) };

            let mut leaving: Option<(usize, f64)> = None;
            for r in 0..self.rows {
                let a = self.at(r, col);
                if a <= PIVOT_TOL {
                    continue;
                }
                let ratio = self.rhs(r).max(0.0) / a;
                leaving = match leaving {
                    None => Some((r, ratio)),
                    Some((lr, lratio)) => {
                        let tie = (ratio - lratio).abs() <= 1e-12 * (1.0 + lratio.abs());
                        let better = if tie {
                            if bland {
                                self.basis[r] < self.basis[lr]
                            } else {
                                a > self.at(lr, col)
                            }
                        } else {
                            ratio < lratio
                        };
                        if better { Some((r, ratio)) } else { Some((lr, lratio)) }
                    }
                };
            }
            let Some((row, ratio)) = leaving else { return Some(false) };
            if ratio <= 1e-12 {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            in_basis[self.basis[row]] = false;
            in_basis[col] = true;
            self.pivot(row, col);
        }
        None
    }
}

/// Solves the LP with a dense two-phase simplex. Dantzig pricing is used
/// until [`BLAND_AFTER`] consecutive degenerate pivots, then Bland's rule
/// until the next strict improvement.
pub fn solve_lp(problem: &LpProblem) -> LpSolution {
    let n = problem.objective.len();
    if !problem.well_formed() {
        return LpSolution::without_point(n, LpStatus::Failed);
    }
    if problem.bounds.iter().any(|&(lo, hi)| hi < lo) {
        return LpSolution::without_point(n, LpStatus::Infeasible);
    }

    // Shift x = lo + x', so x' >= 0; finite upper bounds become rows.
    let lo = DVector::from_iterator(n, problem.bounds.iter().map(|b| b.0));
    let shifted_b = &problem.ineq_b - &problem.ineq_a * &lo;
    let mut rows: Vec<(Vec<f64>, f64)> = (0..problem.ineq_a.nrows())
        .map(|r| (problem.ineq_a.row(r).iter().copied().collect(), shifted_b[r]))
        .collect();
    for (j, &(l, h)) in problem.bounds.iter().enumerate() {
        if h.is_finite() {
            let mut coeffs = vec![0.0; n];
            coeffs[j] = 1.0;
            rows.push((coeffs, h - l));
        }
    }

    let m = rows.len();
    let needs_artificial: Vec<bool> = rows.iter().map(|(_, rhs)| *rhs < 0.0).collect();
    let n_art = needs_artificial.iter().filter(|&&a| a).count();
    let cols = n + m + n_art;
    let width = cols + 1;
    let mut data = vec![0.0; m * width];
    let mut basis = Vec::with_capacity(m);
    let mut next_art = n + m;
    for (r, (coeffs, rhs)) in rows.iter().enumerate() {
        let sign = if needs_artificial[r] { -1.0 } else { 1.0 };
        for (j, a) in coeffs.iter().enumerate() {
            data[r * width + j] = sign * a;
        }
        data[r * width + n + r] = sign;
        data[r * width + cols] = sign * rhs;
        if needs_artificial[r] {
            data[r * width + next_art] = 1.0;
            basis.push(next_art);
            next_art += 1;
        } else {
            basis.push(n + r);
        }
    }
    let mut tab = Tableau { data, rows: m, cols, basis };
    let is_art = |c: usize| c >= n + m;

    if n_art > 0 {
        let cost: Vec<f64> = (0..cols).map(|c| if is_art(c) { -1.0 } else { 0.0 }).collect();
        let allowed = vec![true; cols];
        if tab.optimize(&cost, &allowed).is_none() {
            return LpSolution::without_point(n, LpStatus::Failed);
        }
        let scale = 1.0 + rows.iter().map(|(_, b)| b.abs()).fold(0.0, f64::max);
        if tab.objective(&cost) < -1e-9 * scale {
            return LpSolution::without_point(n, LpStatus::Infeasible);
        }
        // Drive zero-level artificials out of the basis where possible.
        for r in 0..m {
            if !is_art(tab.basis[r]) {
                continue;
            }
            if let Some(c) = (0..n + m).find(|&c| tab.at(r, c).abs() > PIVOT_TOL && !tab.basis.contains(&c)) {
                tab.pivot(r, c);
            }
        }
    }

    let cost: Vec<f64> = (0..cols).map(|c| if c < n { problem.objective[c] } else { 0.0 }).collect();
    let allowed: Vec<bool> = (0..cols).map(|c| !is_art(c)).collect();
    match tab.optimize(&cost, &allowed) {
        None => return LpSolution::without_point(n, LpStatus::Failed),
        Some(false) => return LpSolution::without_point(n, LpStatus::Unbounded),
        Some(true) => {}
    }

    let mut x = lo;
    for r in 0..m {
        let b = tab.basis[r];
        if b < n {
            x[b] += tab.rhs(r).max(0.0);
        }
    }
    let objective = problem.objective.dot(&x);
    LpSolution { x, objective, status: LpStatus::Optimal }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_variable_upper_row() {
        let lp = LpProblem::new(DVector::from_vec(vec![1.0]), DMatrix::from_element(1, 1, 1.0), DVector::from_vec(vec![1.0]));
        let s = solve_lp(&lp);
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.x[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_variable_vertex() {
        let lp = LpProblem::new(
            DVector::from_vec(vec![1.0, 1.0]),
            DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 1.0]),
            DVector::from_vec(vec![4.0, 6.0]),
        );
        let s = solve_lp(&lp);
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.x[0] - 1.6).abs() < 1e-12 && (s.x[1] - 1.2).abs() < 1e-12);
        assert!((s.objective - 2.8).abs() < 1e-12);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let lp = LpProblem::new(DVector::from_vec(vec![1.0]), DMatrix::from_element(1, 1, 1.0), DVector::from_vec(vec![-1.0]));
        assert_eq!(solve_lp(&lp).status, LpStatus::Infeasible);
        let lp = LpProblem::new(DVector::from_vec(vec![1.0, 0.0]), DMatrix::from_row_slice(1, 2, &[-1.0, 1.0]), DVector::from_vec(vec![1.0]));
        assert_eq!(solve_lp(&lp).status, LpStatus::Unbounded);
    }

    #[test]
    fn bounds_are_honored() {
        let mut lp = LpProblem::new(DVector::from_vec(vec![1.0, -1.0]), DMatrix::zeros(0, 2), DVector::zeros(0));
        lp.bounds = vec![(0.5, 2.0), (0.25, f64::INFINITY)];
        let s = solve_lp(&lp);
        assert_eq!(s.status, LpStatus::Optimal);
        assert_eq!(s.x.as_slice(), &[2.0, 0.25]);
        lp.bounds[0] = (3.0, 2.0);
        assert_eq!(solve_lp(&lp).status, LpStatus::Infeasible);
    }

    #[test]
    fn lower_bound_pushes_into_constraint() {
        // x + y >= 3 written as -x - y <= -3, minimize x + 2y
        let lp = LpProblem::new(
            DVector::from_vec(vec![-1.0, -2.0]),
            DMatrix::from_row_slice(1, 2, &[-1.0, -1.0]),
            DVector::from_vec(vec![-3.0]),
        );
        let s = solve_lp(&lp);
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.x[0] - 3.0).abs() < 1e-12 && s.x[1].abs() < 1e-12);
    }

    #[test]
    fn degenerate_cycling_example_terminates() {
        // Beale's classic cycling instance (maximization form).
        let lp = LpProblem::new(
            DVector::from_vec(vec![0.75, -150.0, 0.02, -6.0]),
            DMatrix::from_row_slice(3, 4, &[0.25, -60.0, -0.04, 9.0, 0.5, -90.0, -0.02, 3.0, 0.0, 0.0, 1.0, 0.0]),
            DVector::from_vec(vec![0.0, 0.0, 1.0]),
        );
        let s = solve_lp(&lp);
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective - 0.05).abs() < 1e-9, "{}", s.objective);
    }

    #[test]
    fn zero_objective_keeps_starting_vertex() {
        let mut lp = LpProblem::new(DVector::zeros(2), DMatrix::from_row_slice(1, 2, &[1.0, 1.0]), DVector::from_vec(vec![5.0]));
        lp.bounds = vec![(1.0, f64::INFINITY), (2.0, f64::INFINITY)];
        let s = solve_lp(&lp);
        assert_eq!(s.x.as_slice(), &[1.0, 2.0]);
    }
}
