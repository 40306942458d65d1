//! Dense strictly convex QP solver.
//!
//! Solves
//!
//! ```text
//!     minimize    ½ xᵀ H x + gᵀ x
//!     subject to  l ≤ A x ≤ u
//! ```
//!
//! with the dual active-set method of Goldfarb and Idnani. Rows with `l = u`
//! are equalities; infinite bounds are skipped. The method starts from the
//! unconstrained minimizer and adds violated constraints one at a time, so it
//! needs no feasible starting point and detects infeasibility directly.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("problem dimensions are inconsistent: {0}")]
    Dimension(String),
    #[error("Hessian is not positive definite")]
    NotPositiveDefinite,
    #[error("constraints are infeasible")]
    Infeasible,
    #[error("active-set iteration limit ({0}) reached")]
    IterationLimit(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub hessian: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub constraints: DMatrix<f64>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl QpProblem {
    pub fn unconstrained(hessian: DMatrix<f64>, linear: DVector<f64>) -> Self {
        let n = linear.len();
        Self {
            hessian,
            linear,
            constraints: DMatrix::zeros(0, n),
            lower: DVector::zeros(0),
            upper: DVector::zeros(0),
        }
    }

    pub fn num_variables(&self) -> usize {
        self.linear.len()
    }

    pub fn num_rows(&self) -> usize {
        self.constraints.nrows()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.hessian * x)) + self.linear.dot(x)
    }

    /// Largest bound violation of `x` over all rows.
    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        let ax = &self.constraints * x;
        (0..ax.len()).fold(0.0, |acc: f64, i| acc.max(self.lower[i] - ax[i]).max(ax[i] - self.upper[i]))
    }

    fn check(&self) -> Result<(), QpError> {
        let n = self.linear.len();
        if self.hessian.shape() != (n, n) {
            return Err(QpError::Dimension(format!("Hessian is {:?}, expected ({n}, {n})", self.hessian.shape())));
        }
        let m = self.constraints.nrows();
        if self.constraints.ncols() != n || self.lower.len() != m || self.upper.len() != m {
            return Err(QpError::Dimension("constraint matrix and bounds disagree".into()));
        }
        if (0..m).any(|i| self.lower[i] > self.upper[i]) {
            return Err(QpError::Infeasible);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpSettings {
    /// Bound violation accepted at termination.
    pub feasibility_tol: f64,
    pub max_iterations: usize,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self { feasibility_tol: 1e-10, max_iterations: 10_000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub objective: f64,
    /// Row multipliers; positive when the lower bound is active, negative for the upper.
    pub multipliers: DVector<f64>,
    pub iterations: usize,
    pub active_rows: Vec<usize>,
}

impl QpSolution {
    /// `‖H x + g − Aᵀ λ‖∞`.
    pub fn stationarity_residual(&self, qp: &QpProblem) -> f64 {
        let r = &qp.hessian * &self.x + &qp.linear - qp.constraints.transpose() * &self.multipliers;
        r.amax()
    }
}

/// Signed view of one side of a row: `sign·a_row·x ≥ bound`.
#[derive(Debug, Clone, Copy)]
struct Side {
    row: usize,
    sign: f64,
    bound: f64,
    equality: bool,
}

struct Factor {
    j: DMatrix<f64>,
    r: DMatrix<f64>,
    q: usize,
}

impl Factor {
    fn rotate_j(&mut self, a: usize, b: usize, c: f64, s: f64) {
        for k in 0..self.j.nrows() {
            let (ja, jb) = (self.j[(k, a)], self.j[(k, b)]);
            self.j[(k, a)] = c * ja + s * jb;
            self.j[(k, b)] = -s * ja + c * jb;
        }
    }

    /// Adds normal `n` whose projection `d = Jᵀ n` has already been computed.
    fn add(&mut self, mut d: DVector<f64>) {
        let n = d.len();
        for j in (self.q + 1..n).rev() {
            if d[j] == 0.0 {
                continue;
            }
            let h = d[j - 1].hypot(d[j]);
            let (c, s) = (d[j - 1] / h, d[j] / h);
            d[j - 1] = h;
            d[j] = 0.0;
            self.rotate_j(j - 1, j, c, s);
        }
        for i in 0..=self.q {
            self.r[(i, self.q)] = d[i];
        }
        self.q += 1;
    }

    /// Removes the active constraint at position `l` and restores triangularity.
    fn drop(&mut self, l: usize) {
        let q = self.q;
        for col in l..q - 1 {
            for i in 0..q {
                self.r[(i, col)] = self.r[(i, col + 1)];
            }
        }
        for i in 0..q {
            self.r[(i, q - 1)] = 0.0;
        }
        for j in l..q - 1 {
            let (a, b) = (self.r[(j, j)], self.r[(j + 1, j)]);
            if b == 0.0 {
                continue;
            }
            let h = a.hypot(b);
            let (c, s) = (a / h, b / h);
            for k in j..q - 1 {
                let (ra, rb) = (self.r[(j, k)], self.r[(j + 1, k)]);
                self.r[(j, k)] = c * ra + s * rb;
                self.r[(j + 1, k)] = -s * ra + c * rb;
            }
            self.rotate_j(j, j + 1, c, s);
        }
        self.q -= 1;
    }

    /// Solves `R r = d[..q]` by back substitution.
    fn dual_direction(&self, d: &DVector<f64>) -> DVector<f64> {
        let q = self.q;
        let mut r = DVector::zeros(q);
        for i in (0..q).rev() {
            let mut acc = d[i];
            for k in i + 1..q {
                acc -= self.r[(i, k)] * r[k];
            }
            r[i] = acc / self.r[(i, i)];
        }
        r
    }

    /// `z = J₂ d₂`, the primal step direction.
    fn primal_direction(&self, d: &DVector<f64>) -> DVector<f64> {
        let n = d.len();
        let mut z = DVector::zeros(n);
        for k in self.q..n {
            if d[k] != 0.0 {
                z.axpy(d[k], &self.j.column(k), 1.0);
            }
        }
        z
    }
}

/// Solves `qp`. Deterministic for fixed inputs.
pub fn solve_qp(qp: &QpProblem, settings: &QpSettings) -> Result<QpSolution, QpError> {
    qp.check()?;
    let n = qp.num_variables();
    let m = qp.num_rows();

    let chol = qp.hessian.clone().cholesky().ok_or(QpError::NotPositiveDefinite)?;
    let l_inv = chol
        .l()
        .solve_lower_triangular(&DMatrix::identity(n, n))
        .ok_or(QpError::NotPositiveDefinite)?;
    let mut factor = Factor { j: l_inv.transpose(), r: DMatrix::zeros(n, n), q: 0 };

    let mut x = -chol.solve(&qp.linear);

    let mut sides = Vec::with_capacity(2 * m);
    let row_norm: Vec<f64> = (0..m).map(|i| qp.constraints.row(i).norm()).collect();
    for i in 0..m {
        let (lo, hi) = (qp.lower[i], qp.upper[i]);
        if lo == hi {
            sides.push(Side { row: i, sign: 1.0, bound: lo, equality: true });
            continue;
        }
        if lo.is_finite() {
            sides.push(Side { row: i, sign: 1.0, bound: lo, equality: false });
        }
        if hi.is_finite() {
            sides.push(Side { row: i, sign: -1.0, bound: -hi, equality: false });
        }
    }
    let normal = |s: &Side| -> DVector<f64> { qp.constraints.row(s.row).transpose() * s.sign };
    let slack = |s: &Side, x: &DVector<f64>| -> f64 { s.sign * qp.constraints.row(s.row).dot(&x.transpose()) - s.bound };

    let mut active: Vec<usize> = Vec::new();
    let mut u: Vec<f64> = Vec::new();
    let mut iterations = 0;

    // Equalities first; their multipliers are free and they are never dropped.
    for (idx, side) in sides.iter().enumerate().filter(|(_, s)| s.equality) {
        iterations += 1;
        let np = normal(side);
        let d = factor.j.transpose() * &np;
        let s = slack(side, &x);
        let d2 = d.rows(factor.q, n - factor.q).norm();
        if d2 <= 1e-12 * d.norm() {
            if s.abs() <= settings.feasibility_tol * (1.0 + side.bound.abs()) {
                continue;
            }
            return Err(QpError::Infeasible);
        }
        let z = factor.primal_direction(&d);
        let r = factor.dual_direction(&d);
        let t = -s / (d2 * d2);
        x.axpy(t, &z, 1.0);
        for (uj, rj) in u.iter_mut().zip(r.iter()) {
            *uj -= t * rj;
        }
        u.push(t);
        active.push(idx);
        factor.add(d);
    }

    loop {
        // Most violated inactive inequality, scaled by the row norm.
        let mut chosen: Option<(usize, f64)> = None;
        for (idx, side) in sides.iter().enumerate() {
            if side.equality || active.contains(&idx) || row_norm[side.row] == 0.0 {
                continue;
            }
            let s = slack(side, &x);
            if s < -settings.feasibility_tol {
                let scaled = s / row_norm[side.row];
                if chosen.is_none_or(|(_, best)| scaled < best) {
                    chosen = Some((idx, scaled));
                }
            }
        }
        let Some((p, _)) = chosen else { break };
        let np = normal(&sides[p]);
        let mut u_plus = u.clone();
        u_plus.push(0.0);

        loop {
            iterations += 1;
            if iterations > settings.max_iterations {
                return Err(QpError::IterationLimit(settings.max_iterations));
            }
            let d = factor.j.transpose() * &np;
            let d2 = d.rows(factor.q, n - factor.q).norm();
            let z_nonzero = d2 > 1e-12 * d.norm();
            let r = factor.dual_direction(&d);

            // Largest dual step keeping inequality multipliers non-negative.
            let mut t1 = f64::INFINITY;
            let mut drop_at = None;
            for (pos, rj) in r.iter().enumerate() {
                if *rj > 0.0 && !sides[active[pos]].equality {
                    let ratio = u_plus[pos] / rj;
                    if ratio < t1 {
                        t1 = ratio;
                        drop_at = Some(pos);
                    }
                }
            }
            let sp = slack(&sides[p], &x);
            let t2 = if z_nonzero { -sp / (d2 * d2) } else { f64::INFINITY };
            let t = t1.min(t2);
            if !t.is_finite() {
                return Err(QpError::Infeasible);
            }

            let last = u_plus.len() - 1;
            for (pos, rj) in r.iter().enumerate() {
                u_plus[pos] -= t * rj;
            }
            u_plus[last] += t;

            if z_nonzero {
                let z = factor.primal_direction(&d);
                x.axpy(t, &z, 1.0);
            }
            if z_nonzero && t2 <= t1 {
                u = u_plus;
                active.push(p);
                factor.add(d);
                break;
            }
            let pos = drop_at.expect("partial step has a blocking constraint");
            factor.drop(pos);
            active.remove(pos);
            u_plus.remove(pos);
        }
    }

    let mut multipliers = DVector::zeros(m);
    for (idx, lambda) in active.iter().zip(&u) {
        let s = &sides[*idx];
        multipliers[s.row] += s.sign * lambda;
    }
    let mut active_rows: Vec<usize> = active.iter().map(|i| sides[*i].row).collect();
    active_rows.sort_unstable();
    active_rows.dedup();
    Ok(QpSolution { objective: qp.objective(&x), x, multipliers, iterations, active_rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clipped_scalar_optimum() {
        // min (u − 1)² s.t. u ≤ 0.5
        let qp = QpProblem {
            hessian: DMatrix::from_element(1, 1, 2.0),
            linear: DVector::from_element(1, -2.0),
            constraints: DMatrix::from_element(1, 1, 1.0),
            lower: DVector::from_element(1, f64::NEG_INFINITY),
            upper: DVector::from_element(1, 0.5),
        };
        let sol = solve_qp(&qp, &QpSettings::default()).unwrap();
        assert!((sol.x[0] - 0.5).abs() < 1e-14);
        assert!((sol.multipliers[0] + 1.0).abs() < 1e-12);
        assert!(sol.stationarity_residual(&qp) < 1e-12);
    }

    #[test]
    fn unconstrained_matches_newton_step() {
        let h = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let g = DVector::from_row_slice(&[1.0, -2.0]);
        let sol = solve_qp(&QpProblem::unconstrained(h.clone(), g.clone()), &QpSettings::default()).unwrap();
        let expected = -h.try_inverse().unwrap() * g;
        assert!((sol.x - expected).amax() < 1e-14);
    }

    #[test]
    fn equality_and_inequality_mix() {
        // min ½‖x‖² s.t. x0 + x1 = 1, x0 ≥ 0.8
        let qp = QpProblem {
            hessian: DMatrix::identity(2, 2),
            linear: DVector::zeros(2),
            constraints: DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 0.0]),
            lower: DVector::from_row_slice(&[1.0, 0.8]),
            upper: DVector::from_row_slice(&[1.0, f64::INFINITY]),
        };
        let sol = solve_qp(&qp, &QpSettings::default()).unwrap();
        assert!((sol.x[0] - 0.8).abs() < 1e-12 && (sol.x[1] - 0.2).abs() < 1e-12);
        assert!(sol.stationarity_residual(&qp) < 1e-12);
        assert_eq!(sol.active_rows, vec![0, 1]);
    }

    #[test]
    fn infeasible_box_is_detected() {
        // x ≥ 1 and x ≤ 0 on different rows.
        let qp = QpProblem {
            hessian: DMatrix::identity(1, 1),
            linear: DVector::zeros(1),
            constraints: DMatrix::from_row_slice(2, 1, &[1.0, 1.0]),
            lower: DVector::from_row_slice(&[1.0, f64::NEG_INFINITY]),
            upper: DVector::from_row_slice(&[f64::INFINITY, 0.0]),
        };
        assert_eq!(solve_qp(&qp, &QpSettings::default()), Err(QpError::Infeasible));
    }

    #[test]
    fn indefinite_hessian_is_rejected() {
        let qp = QpProblem::unconstrained(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]), DVector::zeros(2));
        assert_eq!(solve_qp(&qp, &QpSettings::default()), Err(QpError::NotPositiveDefinite));
    }

    #[test]
    fn redundant_constraints_are_handled() {
        // Three copies of x0 + x1 ≥ 2 around min ½‖x‖².
        let qp = QpProblem {
            hessian: DMatrix::identity(2, 2),
            linear: DVector::zeros(2),
            constraints: DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 2.0, 2.0, 1.0, 1.0]),
            lower: DVector::from_row_slice(&[2.0, 4.0, 2.0]),
            upper: DVector::from_element(3, f64::INFINITY),
        };
        let sol = solve_qp(&qp, &QpSettings::default()).unwrap();
        assert!((&sol.x - DVector::from_element(2, 1.0)).amax() < 1e-12);
        assert!(sol.stationarity_residual(&qp) < 1e-12);
    }
}
