//! Gilbert–Johnson–Keerthi distance on vertex-cloud hulls.
//!
//! The simplex lives on the Minkowski difference `robot − obstacle`; every
//! simplex vertex remembers the pair of hull vertices it came from so the
//! witness points are recovered from the barycentric coordinates of the
//! terminal simplex.

use super::{ConvexHull, GeometryError, Vec3};

/// Progress tolerance on `‖v‖ − v·w/‖v‖` and the touching-contact threshold.
pub const GJK_TOLERANCE: f64 = 1e-9;
pub const GJK_MAX_ITERATIONS: usize = 128;

/// Witness pair of two disjoint hulls, in the frame the hulls were given in.
#[derive(Debug, Clone, PartialEq)]
pub struct Separation {
    pub p_robot: Vec3,
    pub p_obstacle: Vec3,
    pub distance: f64,
    /// `p_robot − p_obstacle`; moving the robot along it increases the distance.
    pub gradient: Vec3,
    /// Barycentric weights of `p_robot` over the robot hull's vertex indices.
    pub robot_weights: Vec<(usize, f64)>,
    pub obstacle_weights: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClosestPointResult {
    Separated(Separation),
    /// Overlap, or contact closer than [`GJK_TOLERANCE`].
    Collision,
}

impl ClosestPointResult {
    pub fn is_collision(&self) -> bool {
        matches!(self, ClosestPointResult::Collision)
    }

    pub fn separation(&self) -> Option<&Separation> {
        match self {
            ClosestPointResult::Separated(s) => Some(s),
            ClosestPointResult::Collision => None,
        }
    }

    pub fn distance(&self) -> Option<f64> {
        self.separation().map(|s| s.distance)
    }

    /// Distance with collisions reported as zero.
    pub fn distance_or_zero(&self) -> f64 {
        self.distance().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, Copy)]
struct CsoPoint {
    w: Vec3,
    ia: usize,
    ib: usize,
}

#[derive(Debug, Clone, Copy)]
struct Simplex {
    pts: [CsoPoint; 4],
    bary: [f64; 4],
    len: usize,
}

impl Simplex {
    fn single(p: CsoPoint) -> Self {
        Simplex { pts: [p; 4], bary: [1.0, 0.0, 0.0, 0.0], len: 1 }
    }

    fn contains(&self, p: &CsoPoint) -> bool {
        self.pts[..self.len].iter().any(|q| q.ia == p.ia && q.ib == p.ib)
    }

    fn push(&mut self, p: CsoPoint) {
        self.pts[self.len] = p;
        self.len += 1;
    }

    fn point(&self) -> Vec3 {
        (0..self.len).fold(Vec3::zeros(), |acc, i| acc + self.pts[i].w * self.bary[i])
    }

    /// Replaces the simplex by the smallest sub-simplex containing the point
    /// closest to the origin. Returns `false` if the origin is enclosed.
    fn reduce(&mut self) -> bool {
        let p = self.pts;
        let (keep, bary): (Vec<usize>, Vec<f64>) = match self.len {
            1 => (vec![0], vec![1.0]),
            2 => segment(&p[0].w, &p[1].w, [0, 1]),
            3 => triangle(&p[0].w, &p[1].w, &p[2].w, [0, 1, 2]),
            4 => match tetrahedron(&p) {
                Some(r) => r,
                None => return false,
            },
            _ => unreachable!("simplex holds at most four points"),
        };
        let mut next = Simplex { pts: p, bary: [0.0; 4], len: 0 };
        for (k, (&i, &b)) in keep.iter().zip(bary.iter()).enumerate() {
            next.pts[k] = p[i];
            next.bary[k] = b;
            next.len += 1;
        }
        *self = next;
        true
    }
}

fn segment(a: &Vec3, b: &Vec3, idx: [usize; 2]) -> (Vec<usize>, Vec<f64>) {
    let ab = b - a;
    let denom = ab.norm_squared();
    if denom <= f64::MIN_POSITIVE {
        return (vec![idx[0]], vec![1.0]);
    }
    let t = -a.dot(&ab) / denom;
    if t <= 0.0 {
        (vec![idx[0]], vec![1.0])
    } else if t >= 1.0 {
        (vec![idx[1]], vec![1.0])
    } else {
        (vec![idx[0], idx[1]], vec![1.0 - t, t])
    }
}

fn triangle(a: &Vec3, b: &Vec3, c: &Vec3, idx: [usize; 3]) -> (Vec<usize>, Vec<f64>) {
    let ab = b - a;
    let ac = c - a;
    let area2 = ab.cross(&ac).norm_squared();
    if area2 <= 1e-24 * ab.norm_squared() * ac.norm_squared() || area2 == 0.0 {
        // Collinear: best of the three edges.
        let cands = [
            segment(a, b, [idx[0], idx[1]]),
            segment(a, c, [idx[0], idx[2]]),
            segment(b, c, [idx[1], idx[2]]),
        ];
        let pts = [*a, *b, *c];
        let pos = |i: usize| idx.iter().position(|&j| j == i).unwrap();
        return cands
            .into_iter()
            .min_by(|x, y| {
                let px: Vec3 = x.0.iter().zip(&x.1).map(|(&i, &w)| pts[pos(i)] * w).sum();
                let py: Vec3 = y.0.iter().zip(&y.1).map(|(&i, &w)| pts[pos(i)] * w).sum();
                px.norm_squared().total_cmp(&py.norm_squared())
            })
            .unwrap();
    }

    let ap = -a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return (vec![idx[0]], vec![1.0]);
    }
    let bp = -b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return (vec![idx[1]], vec![1.0]);
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (vec![idx[0], idx[1]], vec![1.0 - v, v]);
    }
    let cp = -c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return (vec![idx[2]], vec![1.0]);
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (vec![idx[0], idx[2]], vec![1.0 - w, w]);
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (vec![idx[1], idx[2]], vec![1.0 - w, w]);
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (vec![idx[0], idx[1], idx[2]], vec![1.0 - v - w, v, w])
}

/// `None` when the origin lies inside the tetrahedron.
fn tetrahedron(p: &[CsoPoint; 4]) -> Option<(Vec<usize>, Vec<f64>)> {
    const FACES: [([usize; 3], usize); 4] = [([0, 1, 2], 3), ([0, 1, 3], 2), ([0, 2, 3], 1), ([1, 2, 3], 0)];
    let w = [p[0].w, p[1].w, p[2].w, p[3].w];
    let mut best: Option<(Vec<usize>, Vec<f64>, f64)> = None;
    for (face, opp) in FACES {
        let (a, b, c) = (w[face[0]], w[face[1]], w[face[2]]);
        let n = (b - a).cross(&(c - a));
        let s_origin = (-a).dot(&n);
        let s_opp = (w[opp] - a).dot(&n);
        let degenerate = s_opp.abs() <= 1e-14 * n.norm() * (w[opp] - a).norm();
        if !(degenerate || s_origin * s_opp < 0.0) {
            continue;
        }
        let (keep, bary) = triangle(&a, &b, &c, face);
        let q: Vec3 = keep.iter().zip(&bary).map(|(&i, &b)| w[i] * b).sum();
        let dq = q.norm_squared();
        if best.as_ref().is_none_or(|(_, _, d)| dq < *d) {
            best = Some((keep, bary, dq));
        }
    }
    best.map(|(k, b, _)| (k, b))
}

fn cso_support(robot: &ConvexHull, obstacle: &ConvexHull, dir: &Vec3) -> CsoPoint {
    // Point of the difference set extreme along `dir`.
    let ia = robot.support_index(dir);
    let ib = obstacle.support_index(&-dir);
    CsoPoint { w: robot.vertices()[ia] - obstacle.vertices()[ib], ia, ib }
}

/// Minimal distance between two hulls expressed in the same (global) frame.
pub fn distance(robot: &ConvexHull, obstacle: &ConvexHull) -> Result<ClosestPointResult, GeometryError> {
    let mut dir = robot.centroid() - obstacle.centroid();
    if dir.norm_squared() < 1e-24 {
        dir = Vec3::x();
    }
    let mut simplex = Simplex::single(cso_support(robot, obstacle, &-dir));
    let mut converged = false;

    for _ in 0..GJK_MAX_ITERATIONS {
        let v = simplex.point();
        let vv = v.norm_squared();
        if vv <= GJK_TOLERANCE * GJK_TOLERANCE {
            return Ok(ClosestPointResult::Collision);
        }
        let w = cso_support(robot, obstacle, &-v);
        if simplex.contains(&w) || vv - v.dot(&w.w) <= GJK_TOLERANCE * vv.sqrt() {
            converged = true;
            break;
        }
        let previous = simplex;
        simplex.push(w);
        if !simplex.reduce() {
            return Ok(ClosestPointResult::Collision);
        }
        if simplex.point().norm_squared() >= vv {
            simplex = previous;
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(GeometryError::NonConvergence(GJK_MAX_ITERATIONS));
    }

    let mut robot_weights = Vec::with_capacity(simplex.len);
    let mut obstacle_weights = Vec::with_capacity(simplex.len);
    for i in 0..simplex.len {
        accumulate(&mut robot_weights, simplex.pts[i].ia, simplex.bary[i]);
        accumulate(&mut obstacle_weights, simplex.pts[i].ib, simplex.bary[i]);
    }
    let p_robot = robot.combine(&robot_weights);
    let p_obstacle = obstacle.combine(&obstacle_weights);
    let gradient = p_robot - p_obstacle;
    let distance = gradient.norm();
    if distance < GJK_TOLERANCE {
        return Ok(ClosestPointResult::Collision);
    }
    Ok(ClosestPointResult::Separated(Separation {
        p_robot,
        p_obstacle,
        distance,
        gradient,
        robot_weights,
        obstacle_weights,
    }))
}

fn accumulate(weights: &mut Vec<(usize, f64)>, index: usize, w: f64) {
    match weights.iter_mut().find(|(i, _)| *i == index) {
        Some((_, acc)) => *acc += w,
        None => weights.push((index, w)),
    }
}

/// Closest obstacle to `robot`. A colliding obstacle wins immediately
/// (first colliding index); otherwise the arg-min distance, ties to the lower index.
pub fn closest_obstacle(
    robot: &ConvexHull,
    obstacles: &[ConvexHull],
) -> Result<(usize, ClosestPointResult), GeometryError> {
    if obstacles.is_empty() {
        return Err(GeometryError::EmptyObstacleSet);
    }
    let mut best: Option<(usize, ClosestPointResult)> = None;
    for (m, obstacle) in obstacles.iter().enumerate() {
        let r = distance(robot, obstacle)?;
        if r.is_collision() {
            return Ok((m, r));
        }
        let better = match &best {
            None => true,
            Some((_, b)) => r.distance_or_zero() < b.distance_or_zero(),
        };
        if better {
            best = Some((m, r));
        }
    }
    Ok(best.expect("non-empty obstacle set"))
}
