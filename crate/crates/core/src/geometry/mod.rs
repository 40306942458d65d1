//! Convex-hull geometry: rigid transforms, hulls, GJK distance and the
//! shrinking fallback used when a predicted configuration is in collision.

mod gjk;
mod shrink;

pub use gjk::{closest_obstacle, distance, ClosestPointResult, Separation, GJK_MAX_ITERATIONS, GJK_TOLERANCE};
pub use shrink::{shrink_closest_point, ShrinkOutcome, DEFAULT_GAMMA0, MAX_SHRINK_ITERATIONS};

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use thiserror::Error;

/// Point or direction in 3D, meters unless stated otherwise.
pub type Vec3 = Vector3<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("support direction has zero length")]
    ZeroDirection,
    #[error("hull `{0}` has no vertices")]
    EmptyHull(String),
    #[error("hull `{0}` has a non-finite vertex")]
    NonFiniteVertex(String),
    #[error("obstacle set is empty")]
    EmptyObstacleSet,
    #[error("GJK did not converge within {0} iterations")]
    NonConvergence(usize),
    #[error("hulls do not collide; shrinking is not applicable")]
    NotColliding,
    #[error("shrinking did not separate the hulls within {0} iterations")]
    MaxShrinkIterations(usize),
    #[error("shrink factor {0} is outside (0, 1)")]
    InvalidShrinkFactor(f64),
    #[error("rotation is not a proper orthonormal matrix")]
    InvalidRotation,
}

/// Rigid transform `p ↦ R p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
}

impl Default for HomTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl HomTransform {
    pub const ORTHONORMAL_TOLERANCE: f64 = 1e-9;

    pub fn identity() -> Self {
        Self { rotation: Matrix3::identity(), translation: Vec3::zeros() }
    }

    /// Builds a transform after checking that `rotation` is in SO(3).
    pub fn new(rotation: Matrix3<f64>, translation: Vec3) -> Result<Self, GeometryError> {
        let t = Self { rotation, translation };
        if t.is_valid(Self::ORTHONORMAL_TOLERANCE) && translation.iter().all(|v| v.is_finite()) {
            Ok(t)
        } else {
            Err(GeometryError::InvalidRotation)
        }
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self { rotation: Matrix3::identity(), translation }
    }

    /// Rotation by `angle` radians about the (normalized) `axis`.
    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Self {
        let rotation = Rotation3::from_axis_angle(&Unit::new_normalize(*axis), angle);
        Self { rotation: *rotation.matrix(), translation: Vec3::zeros() }
    }

    /// Extrinsic XYZ angles: `R = Rz(z) Ry(y) Rx(x)`.
    pub fn from_xyz_angles(angles: &Vec3, translation: Vec3) -> Self {
        let rotation = Rotation3::from_euler_angles(angles.x, angles.y, angles.z);
        Self { rotation: *rotation.matrix(), translation }
    }

    /// Inverse of [`HomTransform::from_xyz_angles`] for the rotation part.
    pub fn xyz_angles(&self) -> Vec3 {
        let r = Rotation3::from_matrix_unchecked(self.rotation);
        let (x, y, z) = r.euler_angles();
        Vec3::new(x, y, z)
    }

    pub fn compose(&self, other: &HomTransform) -> HomTransform {
        HomTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> HomTransform {
        let rt = self.rotation.transpose();
        HomTransform { rotation: rt, translation: -(rt * self.translation) }
    }

    #[inline]
    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    #[inline]
    pub fn transform_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    pub fn is_valid(&self, tol: f64) -> bool {
        let r = &self.rotation;
        r.iter().all(|v| v.is_finite())
            && (r.transpose() * r - Matrix3::identity()).amax() <= tol
            && (r.determinant() - 1.0).abs() <= tol
    }
}

impl std::ops::Mul for HomTransform {
    type Output = HomTransform;
    fn mul(self, rhs: HomTransform) -> HomTransform {
        self.compose(&rhs)
    }
}

impl std::ops::Mul<&HomTransform> for &HomTransform {
    type Output = HomTransform;
    fn mul(self, rhs: &HomTransform) -> HomTransform {
        self.compose(rhs)
    }
}

/// Convex hull given implicitly by a vertex cloud.
///
/// Hulls loaded from scenario files are re-centered so the local frame
/// origin sits at the vertex mean; scaling about the origin is then scaling
/// about the geometric center.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexHull {
    id: String,
    vertices: Vec<Vec3>,
    centroid: Vec3,
}

impl ConvexHull {
    pub fn new(id: impl Into<String>, vertices: Vec<Vec3>) -> Result<Self, GeometryError> {
        let id = id.into();
        if vertices.is_empty() {
            return Err(GeometryError::EmptyHull(id));
        }
        if vertices.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(GeometryError::NonFiniteVertex(id));
        }
        let centroid = mean(&vertices);
        Ok(Self { id, vertices, centroid })
    }

    /// Splits `vertices` into a centroid-origin hull and the centroid itself,
    /// i.e. the translation that places the hull back where it was authored.
    pub fn centered(id: impl Into<String>, vertices: Vec<Vec3>) -> Result<(Self, Vec3), GeometryError> {
        let hull = Self::new(id, vertices)?;
        let c = hull.centroid;
        let local: Vec<Vec3> = hull.vertices.iter().map(|v| v - c).collect();
        Ok((Self::new(hull.id, local)?, c))
    }

    /// Point hull, used for distance queries of a single witness point.
    pub fn point(id: impl Into<String>, p: Vec3) -> Self {
        Self { id: id.into(), vertices: vec![p], centroid: p }
    }

    /// Axis-aligned box `[min, max]`, vertices in binary order of (x, y, z).
    pub fn cuboid(id: impl Into<String>, min: Vec3, max: Vec3) -> Self {
        let mut vertices = Vec::with_capacity(8);
        for i in 0..8 {
            vertices.push(Vec3::new(
                if i & 1 == 0 { min.x } else { max.x },
                if i & 2 == 0 { min.y } else { max.y },
                if i & 4 == 0 { min.z } else { max.z },
            ));
        }
        let centroid = mean(&vertices);
        Self { id: id.into(), vertices, centroid }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn centroid(&self) -> &Vec3 {
        &self.centroid
    }

    /// Index of the vertex maximizing `v · direction`; ties go to the lowest index.
    pub fn support_index(&self, direction: &Vec3) -> usize {
        let mut best = 0;
        let mut best_dot = self.vertices[0].dot(direction);
        for (i, v) in self.vertices.iter().enumerate().skip(1) {
            let d = v.dot(direction);
            if d > best_dot {
                best = i;
                best_dot = d;
            }
        }
        best
    }

    pub fn support(&self, direction: &Vec3) -> Result<Vec3, GeometryError> {
        if direction.norm_squared() == 0.0 || !direction.iter().all(|c| c.is_finite()) {
            return Err(GeometryError::ZeroDirection);
        }
        Ok(self.vertices[self.support_index(direction)])
    }

    /// The hull with every vertex mapped by `pose`.
    pub fn transformed(&self, pose: &HomTransform) -> ConvexHull {
        ConvexHull {
            id: self.id.clone(),
            vertices: self.vertices.iter().map(|v| pose.transform_point(v)).collect(),
            centroid: pose.transform_point(&self.centroid),
        }
    }

    /// Uniform scaling about the local origin.
    pub fn scaled(&self, factor: f64) -> ConvexHull {
        ConvexHull {
            id: self.id.clone(),
            vertices: self.vertices.iter().map(|v| v * factor).collect(),
            centroid: self.centroid * factor,
        }
    }

    /// Point given by barycentric weights over this hull's vertices.
    pub fn combine(&self, weights: &[(usize, f64)]) -> Vec3 {
        weights.iter().fold(Vec3::zeros(), |acc, (i, w)| acc + self.vertices[*i] * *w)
    }
}

/// Convenience wrapper matching the free-function form used by the prediction code.
pub fn transform_hull(hull: &ConvexHull, pose: &HomTransform) -> ConvexHull {
    hull.transformed(pose)
}

/// Vertex of `hull` maximizing `dot(v, direction)`.
pub fn support(hull: &ConvexHull, direction: &Vec3) -> Result<Vec3, GeometryError> {
    hull.support(direction)
}

fn mean(points: &[Vec3]) -> Vec3 {
    points.iter().fold(Vec3::zeros(), |acc, p| acc + p) / points.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn unit_cube() -> ConvexHull {
        ConvexHull::cuboid("cube", Vec3::zeros(), Vec3::new(1.0, 1.0, 1.0))
    }

    #[test]
    fn support_picks_lowest_index_on_ties() {
        let cube = unit_cube();
        assert_eq!(cube.support(&Vec3::x()).unwrap(), Vec3::new(1.0, 0.0, 0.0));
        let tet = ConvexHull::new(
            "tet",
            vec![Vec3::zeros(), Vec3::x(), Vec3::y(), Vec3::z()],
        )
        .unwrap();
        assert_eq!(tet.support(&Vec3::new(1.0, 1.0, 1.0)).unwrap(), Vec3::x());
    }

    #[test]
    fn support_rejects_zero_direction() {
        assert_eq!(unit_cube().support(&Vec3::zeros()), Err(GeometryError::ZeroDirection));
    }

    #[test]
    fn empty_and_nonfinite_hulls_are_rejected() {
        assert!(matches!(ConvexHull::new("e", vec![]), Err(GeometryError::EmptyHull(_))));
        assert!(matches!(
            ConvexHull::new("n", vec![Vec3::new(f64::NAN, 0.0, 0.0)]),
            Err(GeometryError::NonFiniteVertex(_))
        ));
    }

    #[test]
    fn centroid_is_vertex_mean() {
        let cube = unit_cube();
        assert!((cube.centroid() - Vec3::new(0.5, 0.5, 0.5)).norm() < 1e-12);
        let (local, offset) = ConvexHull::centered("c", cube.vertices().to_vec()).unwrap();
        assert!(local.centroid().norm() < 1e-12);
        assert!((offset - Vec3::new(0.5, 0.5, 0.5)).norm() < 1e-12);
    }

    #[test]
    fn transform_hull_examples() {
        let cube = unit_cube();
        let same = transform_hull(&cube, &HomTransform::identity());
        assert_eq!(same.vertices(), cube.vertices());

        let moved = transform_hull(&cube, &HomTransform::from_translation(Vec3::x()));
        let expected = ConvexHull::cuboid("x", Vec3::new(1.0, 0.0, 0.0), Vec3::new(2.0, 1.0, 1.0));
        assert_eq!(moved.vertices(), expected.vertices());
        assert!((moved.centroid() - expected.centroid()).norm() < 1e-15);

        let rot = HomTransform::from_axis_angle(&Vec3::z(), FRAC_PI_2);
        let p = rot.transform_point(&Vec3::x());
        assert!((p - Vec3::y()).norm() < 1e-12);
    }

    #[test]
    fn inverse_composes_to_identity() {
        let t = HomTransform::from_xyz_angles(&Vec3::new(0.3, -0.7, 1.1), Vec3::new(1.0, -2.0, 0.5));
        assert!(t.is_valid(1e-9));
        let id = t.compose(&t.inverse());
        assert!((id.rotation - Matrix3::identity()).amax() < 1e-9);
        assert!(id.translation.norm() < 1e-9);
        assert!((t.xyz_angles() - Vec3::new(0.3, -0.7, 1.1)).norm() < 1e-12);
    }

    #[test]
    fn new_rejects_non_rotations() {
        let skew = Matrix3::new(1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert_eq!(HomTransform::new(skew, Vec3::zeros()), Err(GeometryError::InvalidRotation));
        let mirror = Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, -1.0));
        assert_eq!(HomTransform::new(mirror, Vec3::zeros()), Err(GeometryError::InvalidRotation));
    }
}
