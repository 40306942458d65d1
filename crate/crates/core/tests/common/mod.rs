//! Independent reference implementations shared by the integration tests.
//!
//! None of these call into the solver code they check: distances come from
//! exhaustive enumeration of Minkowski-difference faces, derivatives from
//! central differences and QP optima from accelerated dual projected gradient.

#![allow(dead_code)]

use std::ops::Range;

use foresight::geometry::{ConvexHull, Vec3};
use nalgebra::{DMatrix, DVector, Matrix3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Random vertex cloud of `4..=max_vertices` points scattered in an
/// anisotropic ball around `center` with a radius drawn from `radius`.
pub fn random_hull(rng: &mut ChaCha8Rng, id: &str, center: Vec3, radius: Range<f64>, max_vertices: usize) -> ConvexHull {
    let radius = rng.random_range(radius);
    let n = rng.random_range(4..=max_vertices.max(4));
    let scale = Vec3::new(rng.random_range(0.3..1.0), rng.random_range(0.3..1.0), rng.random_range(0.3..1.0)) * radius;
    let vertices = (0..n)
        .map(|_| {
            let d = random_unit(rng) * rng.random_range(0.5..1.0);
            center + d.component_mul(&scale)
        })
        .collect();
    ConvexHull::new(id, vertices).expect("random hull is finite and non-empty")
}

/// Minimum-norm point of `conv(points)`, or `None` when the origin lies inside.
///
/// The minimizer lies in the relative interior of a face spanned by at most
/// three affinely independent points, so every subset of size one to three is
/// tried: project the origin onto its affine hull and keep projections with
/// non-negative barycentric coordinates. The winner is then certified by the
/// supporting-plane condition `p·w ≥ ‖p‖²` for all points `w`.
pub fn min_norm_point(points: &[Vec3]) -> Option<Vec3> {
    let mut best: Option<Vec3> = None;
    let mut consider = |p: Vec3| {
        if best.is_none_or(|b| p.norm_squared() < b.norm_squared()) {
            best = Some(p);
        }
    };
    let m = points.len();
    for i in 0..m {
        consider(points[i]);
        for j in i + 1..m {
            if let Some(p) = project_segment(&points[i], &points[j]) {
                consider(p);
            }
            for k in j + 1..m {
                if let Some(p) = project_triangle(&points[i], &points[j], &points[k]) {
                    consider(p);
                }
            }
        }
    }
    let p = best?;
    let n2 = p.norm_squared();
    let certified = points.iter().all(|w| p.dot(w) >= n2 - 1e-12 * (1.0 + n2));
    if certified && n2 > 0.0 { Some(p) } else { None }
}

fn project_segment(a: &Vec3, b: &Vec3) -> Option<Vec3> {
    let ab = b - a;
    let l2 = ab.norm_squared();
    if l2 < 1e-24 {
        return None;
    }
    let t = -a.dot(&ab) / l2;
    (t > 0.0 && t < 1.0).then(|| a + ab * t)
}

fn project_triangle(a: &Vec3, b: &Vec3, c: &Vec3) -> Option<Vec3> {
    let (e1, e2) = (b - a, c - a);
    let g = nalgebra::Matrix2::new(e1.dot(&e1), e1.dot(&e2), e1.dot(&e2), e2.dot(&e2));
    if g.determinant().abs() < 1e-18 * (1.0 + g.norm_squared()) {
        return None;
    }
    let rhs = nalgebra::Vector2::new(-a.dot(&e1), -a.dot(&e2));
    let st = g.try_inverse()? * rhs;
    (st.x > 0.0 && st.y > 0.0 && st.x + st.y < 1.0).then(|| a + e1 * st.x + e2 * st.y)
}

/// Exact hull-to-hull distance, `0.0` on overlap.
pub fn oracle_distance(a: &ConvexHull, b: &ConvexHull) -> f64 {
    let cso: Vec<Vec3> = a.vertices().iter().flat_map(|va| b.vertices().iter().map(move |vb| va - vb)).collect();
    min_norm_point(&cso).map_or(0.0, |p| p.norm())
}

/// Distance from `p` to `conv(hull)`; zero for interior points.
pub fn membership_residual(p: &Vec3, hull: &ConvexHull) -> f64 {
    let shifted: Vec<Vec3> = hull.vertices().iter().map(|v| v - p).collect();
    min_norm_point(&shifted).map_or(0.0, |c| c.norm())
}

/// Central difference `∂f/∂q` of a vector function of the joints.
pub fn finite_jacobian(f: impl Fn(&Vec3) -> Vec3, q: &Vec3, h: f64) -> Matrix3<f64> {
    let mut jac = Matrix3::zeros();
    for i in 0..3 {
        let mut dq = Vec3::zeros();
        dq[i] = h;
        jac.set_column(i, &((f(&(q + dq)) - f(&(q - dq))) / (2.0 * h)));
    }
    jac
}

/// Strictly convex QP with a known feasible point. Rows are a mix of two-sided, one-sided and
/// equality constraints.
pub struct RandomQp {
    pub hessian: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub constraints: DMatrix<f64>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

pub fn random_qp(rng: &mut ChaCha8Rng, max_variables: usize, max_rows: usize) -> RandomQp {
    let n = rng.random_range(2..=max_variables.max(2));
    let m = rng.random_range(1..=max_rows.max(1));
    let b = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0)) / (n as f64).sqrt();
    let hessian = b.transpose() * &b + DMatrix::identity(n, n) * 0.2;
    let linear = DVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
    let constraints = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
    let x0 = DVector::from_fn(n, |_, _| rng.random_range(-0.5..0.5));
    let ax0 = &constraints * &x0;
    let equalities = rng.random_range(0..=(n / 2).min(m));
    let mut lower = DVector::zeros(m);
    let mut upper = DVector::zeros(m);
    for i in 0..m {
        if i < equalities {
            lower[i] = ax0[i];
            upper[i] = ax0[i];
            continue;
        }
        let (lo, hi) = (ax0[i] - rng.random_range(0.0..0.5), ax0[i] + rng.random_range(0.0..0.5));
        match rng.random_range(0..3) {
            0 => (lower[i], upper[i]) = (lo, hi),
            1 => (lower[i], upper[i]) = (lo, f64::INFINITY),
            _ => (lower[i], upper[i]) = (f64::NEG_INFINITY, hi),
        }
    }
    RandomQp { hessian, linear, constraints, lower, upper }
}

pub struct OracleSolution {
    pub x: DVector<f64>,
    pub objective: f64,
    pub gap: f64,
    pub violation: f64,
}

/// Dual projected gradient with Nesterov acceleration and adaptive restart.
///
/// Every finite bound becomes one row `c·x ≥ d`. The dual of
/// `min ½xᵀHx + gᵀx  s.t.  Cx ≥ d` is the bound-constrained problem
/// `max_{λ≥0} −½(Cᵀλ − g)ᵀH⁻¹(Cᵀλ − g) + dᵀλ`, whose projection is a clamp.
/// Iterates until the duality gap and the primal violation are both tiny.
pub fn oracle_qp(qp: &RandomQp, tol: f64, max_iter: usize) -> OracleSolution {
    let n = qp.linear.len();
    let mut rows: Vec<(DVector<f64>, f64)> = Vec::new();
    for i in 0..qp.constraints.nrows() {
        let a = qp.constraints.row(i).transpose();
        if qp.lower[i].is_finite() {
            rows.push((a.clone(), qp.lower[i]));
        }
        if qp.upper[i].is_finite() {
            rows.push((-a, -qp.upper[i]));
        }
    }
    let p = rows.len();
    let c = DMatrix::from_fn(p, n, |r, j| rows[r].0[j]);
    let d = DVector::from_fn(p, |r, _| rows[r].1);
    let h_inv = qp.hessian.clone().cholesky().expect("oracle needs positive definite H").inverse();
    let m = &c * &h_inv * c.transpose();
    let offset = &d + &c * &h_inv * &qp.linear;
    let step = 1.0 / m.symmetric_eigenvalues().amax().max(1e-12);
    let primal = |lam: &DVector<f64>| &h_inv * (c.transpose() * lam - &qp.linear);
    let objective = |x: &DVector<f64>| 0.5 * x.dot(&(&qp.hessian * x)) + qp.linear.dot(x);
    let dual_value = |lam: &DVector<f64>| {
        let v = c.transpose() * lam - &qp.linear;
        -0.5 * v.dot(&(&h_inv * &v)) + d.dot(lam)
    };

    let mut lam = DVector::zeros(p);
    let mut y = lam.clone();
    let mut t = 1.0f64;
    let mut best = (f64::INFINITY, DVector::zeros(n), f64::INFINITY, f64::INFINITY);
    for it in 0..max_iter {
        let grad = &offset - &m * &y;
        let next = (&y + grad * step).map(|v| v.max(0.0));
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let momentum = (t - 1.0) / t_next;
        if (&next - &lam).dot(&(&y - &next)) > 0.0 {
            // Restart when momentum points uphill.
            y = next.clone();
            t = 1.0;
        } else {
            y = &next + (&next - &lam) * momentum;
            t = t_next;
        }
        lam = next;
        if it % 16 == 0 || it + 1 == max_iter {
            let x = primal(&lam);
            let violation = (&d - &c * &x).iter().fold(0.0f64, |a, v| a.max(*v));
            let f = objective(&x);
            let gap = (f - dual_value(&lam)).abs();
            if violation.max(gap) < best.2.max(best.3) {
                best = (f, x, gap, violation);
            }
            if gap < tol && violation < tol {
                break;
            }
        }
    }
    OracleSolution { objective: best.0, x: best.1, gap: best.2, violation: best.3 }
}
