//! Three-joint revolute chain: forward kinematics, Jacobians and the Euler
//! prediction step.
//!
//! The end-effector state is its orientation only, as extrinsic XYZ angles
//! `R = Rz(φz) Ry(φy) Rx(φx)`.

mod reference;

pub use reference::{reference_c_arm, reference_limits, reference_table};

use nalgebra::{Matrix3, Vector6};
use thiserror::Error;

use crate::geometry::{ConvexHull, HomTransform, Vec3};

pub const JOINT_COUNT: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("expected {JOINT_COUNT} joints, got {0}")]
    JointCount(usize),
    #[error("joint {0} has a zero or non-finite axis")]
    InvalidAxis(usize),
    #[error("limit `{0}` is not ordered or not positive")]
    InvalidLimits(&'static str),
    #[error("link index {0} is out of range")]
    InvalidLink(usize),
    #[error("link `{0}` is attached to missing joint {1}")]
    InvalidAttachment(String, usize),
    #[error("XYZ angle rates are singular at φy = {0}")]
    SingularParameterization(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub const fn new(lower: f64, upper: f64) -> Self {
        Self { lower, upper }
    }

    pub fn symmetric(half_width: f64) -> Self {
        Self { lower: -half_width, upper: half_width }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lower && v <= self.upper
    }

    fn is_ordered(&self) -> bool {
        self.lower < self.upper
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RevoluteJoint {
    pub name: String,
    /// Fixed transform from the parent frame to this joint's frame.
    pub origin: HomTransform,
    /// Unit rotation axis in the joint frame.
    pub axis: Vec3,
}

/// A hull rigidly mounted on a link. The hull is stored centroid-origin; `mount`
/// maps its local frame into the link frame.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkHull {
    pub hull: ConvexHull,
    pub mount: HomTransform,
}

impl LinkHull {
    /// Re-centers vertices authored in the link frame.
    pub fn from_link_vertices(id: impl Into<String>, vertices: Vec<Vec3>) -> Result<Self, crate::geometry::GeometryError> {
        let (hull, centroid) = ConvexHull::centered(id, vertices)?;
        Ok(Self { hull, mount: HomTransform::from_translation(centroid) })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub name: String,
    /// Index of the joint whose frame carries this link.
    pub joint: usize,
    pub hulls: Vec<LinkHull>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointLimits {
    pub position: [Interval; JOINT_COUNT],
    pub velocity: [f64; JOINT_COUNT],
    pub acceleration: [f64; JOINT_COUNT],
    pub jerk: [f64; JOINT_COUNT],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EndEffectorLimits {
    pub angle: [Interval; JOINT_COUNT],
    pub velocity: [f64; JOINT_COUNT],
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobotModel {
    joints: Vec<RevoluteJoint>,
    links: Vec<Link>,
    end_effector: HomTransform,
    joint_limits: JointLimits,
    ee_limits: EndEffectorLimits,
}

/// Joint angles and end-effector orientation, `x = [x_e; q]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemState {
    pub x_e: Vec3,
    pub q: Vec3,
}

impl SystemState {
    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Self { x_e: v.fixed_rows::<3>(0).into(), q: v.fixed_rows::<3>(3).into() }
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(self.x_e.x, self.x_e.y, self.x_e.z, self.q.x, self.q.y, self.q.z)
    }
}

/// Joint velocities `[q̇₁, q̇₂, q̇₃]` in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControlInput(pub Vec3);

impl ControlInput {
    pub fn zero() -> Self {
        Self(Vec3::zeros())
    }
}

/// Frames produced by forward kinematics at one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainPose {
    /// World pose of each joint frame (after its own rotation).
    pub joint_frames: [HomTransform; JOINT_COUNT],
    pub end_effector: HomTransform,
    pub x_e: Vec3,
}

impl ChainPose {
    pub fn link_frame(&self, link: &Link) -> HomTransform {
        self.joint_frames[link.joint]
    }
}

impl RobotModel {
    pub fn new(
        joints: Vec<RevoluteJoint>,
        links: Vec<Link>,
        end_effector: HomTransform,
        joint_limits: JointLimits,
        ee_limits: EndEffectorLimits,
    ) -> Result<Self, KinematicsError> {
        if joints.len() != JOINT_COUNT {
            return Err(KinematicsError::JointCount(joints.len()));
        }
        let mut joints = joints;
        for (i, j) in joints.iter_mut().enumerate() {
            let n = j.axis.norm();
            if !(n.is_finite() && n > 0.0) {
                return Err(KinematicsError::InvalidAxis(i));
            }
            j.axis /= n;
        }
        for link in &links {
            if link.joint >= JOINT_COUNT {
                return Err(KinematicsError::InvalidAttachment(link.name.clone(), link.joint));
            }
        }
        if !joint_limits.position.iter().all(Interval::is_ordered) {
            return Err(KinematicsError::InvalidLimits("joint position"));
        }
        if !ee_limits.angle.iter().all(Interval::is_ordered) {
            return Err(KinematicsError::InvalidLimits("end-effector angle"));
        }
        let positive = |xs: &[f64; 3]| xs.iter().all(|v| *v > 0.0);
        if !positive(&joint_limits.velocity) {
            return Err(KinematicsError::InvalidLimits("joint velocity"));
        }
        if !positive(&joint_limits.acceleration) {
            return Err(KinematicsError::InvalidLimits("joint acceleration"));
        }
        if !positive(&joint_limits.jerk) {
            return Err(KinematicsError::InvalidLimits("joint jerk"));
        }
        if !positive(&ee_limits.velocity) {
            return Err(KinematicsError::InvalidLimits("end-effector velocity"));
        }
        Ok(Self { joints, links, end_effector, joint_limits, ee_limits })
    }

    pub fn joints(&self) -> &[RevoluteJoint] {
        &self.joints
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn link(&self, index: usize) -> Result<&Link, KinematicsError> {
        self.links.get(index).ok_or(KinematicsError::InvalidLink(index))
    }

    pub fn joint_limits(&self) -> &JointLimits {
        &self.joint_limits
    }

    pub fn ee_limits(&self) -> &EndEffectorLimits {
        &self.ee_limits
    }

    pub fn hull_count(&self) -> usize {
        self.links.iter().map(|l| l.hulls.len()).sum()
    }

    /// Composes the chain at `q`. Total: limits are not checked here.
    pub fn forward_kinematics(&self, q: &Vec3) -> ChainPose {
        let mut frame = HomTransform::identity();
        let mut joint_frames = [HomTransform::identity(); JOINT_COUNT];
        for (i, joint) in self.joints.iter().enumerate() {
            frame = frame * joint.origin * HomTransform::from_axis_angle(&joint.axis, q[i]);
            joint_frames[i] = frame;
        }
        let end_effector = frame * self.end_effector;
        let x_e = end_effector.xyz_angles();
        ChainPose { joint_frames, end_effector, x_e }
    }

    /// State with `x_e` consistent with `q`.
    pub fn state_at(&self, q: &Vec3) -> SystemState {
        SystemState { x_e: self.forward_kinematics(q).x_e, q: *q }
    }

    /// World poses of every hull, link by link.
    pub fn hull_poses(&self, pose: &ChainPose) -> Vec<Vec<HomTransform>> {
        self.links
            .iter()
            .map(|link| {
                let frame = pose.link_frame(link);
                link.hulls.iter().map(|h| frame * h.mount).collect()
            })
            .collect()
    }

    /// World-frame joint axes at `pose` (columns of the angular-velocity Jacobian).
    fn world_axes(&self, pose: &ChainPose) -> Matrix3<f64> {
        let mut m = Matrix3::zeros();
        for (i, joint) in self.joints.iter().enumerate() {
            m.set_column(i, &pose.joint_frames[i].transform_vector(&joint.axis));
        }
        m
    }

    /// `J(q)` with `ẋ_e = J(q) q̇`: the angular-velocity Jacobian mapped through
    /// the inverse of the XYZ angle-rate matrix.
    pub fn jacobian_end_effector(&self, q: &Vec3) -> Result<Matrix3<f64>, KinematicsError> {
        let pose = self.forward_kinematics(q);
        let rates = xyz_rate_matrix(&pose.x_e)?;
        let inv = rates.try_inverse().ok_or(KinematicsError::SingularParameterization(pose.x_e.y))?;
        Ok(inv * self.world_axes(&pose))
    }

    /// Linear-velocity Jacobian of a point fixed in link `link_index`, given in
    /// that link's frame. Joints downstream of the link have zero columns.
    pub fn jacobian_point(&self, q: &Vec3, r_link: &Vec3, link_index: usize) -> Result<Matrix3<f64>, KinematicsError> {
        let link = self.link(link_index)?;
        let pose = self.forward_kinematics(q);
        Ok(self.jacobian_point_at(&pose, r_link, link))
    }

    pub(crate) fn jacobian_point_at(&self, pose: &ChainPose, r_link: &Vec3, link: &Link) -> Matrix3<f64> {
        let p = pose.link_frame(link).transform_point(r_link);
        let mut jac = Matrix3::zeros();
        for i in 0..=link.joint {
            let frame = &pose.joint_frames[i];
            let axis = frame.transform_vector(&self.joints[i].axis);
            jac.set_column(i, &axis.cross(&(p - frame.translation)));
        }
        jac
    }

    /// World position of a link-frame point.
    pub fn point_position(&self, q: &Vec3, r_link: &Vec3, link_index: usize) -> Result<Vec3, KinematicsError> {
        let link = self.link(link_index)?;
        Ok(self.forward_kinematics(q).link_frame(link).transform_point(r_link))
    }

    /// `f(x, u) = [J(q) u; u]`.
    pub fn velocity_kinematics(&self, x: &Vector6<f64>, u: &Vec3) -> Result<Vector6<f64>, KinematicsError> {
        let q = Vec3::new(x[3], x[4], x[5]);
        let xe_dot = self.jacobian_end_effector(&q)? * u;
        Ok(Vector6::new(xe_dot.x, xe_dot.y, xe_dot.z, u.x, u.y, u.z))
    }

    /// One forward-Euler step of the end-effector state model.
    pub fn step_state(&self, x: &SystemState, u: &ControlInput, ts: f64) -> Result<SystemState, KinematicsError> {
        let v = x.to_vector();
        let dx = self.velocity_kinematics(&v, &u.0)?;
        Ok(SystemState::from_vector(&euler_step(&v, &u.0, ts, |_, _| dx)))
    }
}

/// Matrix `E(φ)` with `ω = E(φ) φ̇` for extrinsic XYZ angles.
pub fn xyz_rate_matrix(angles: &Vec3) -> Result<Matrix3<f64>, KinematicsError> {
    if angles.y.cos().abs() < 1e-6 {
        return Err(KinematicsError::SingularParameterization(angles.y));
    }
    let (sy, cy) = angles.y.sin_cos();
    let (sz, cz) = angles.z.sin_cos();
    Ok(Matrix3::new(
        cz * cy, -sz, 0.0, //
        sz * cy, cz, 0.0, //
        -sy, 0.0, 1.0,
    ))
}

/// `x⁺ = x + Ts·f(x, u)`, for any state dimension.
pub fn euler_step<const D: usize>(
    x: &nalgebra::SVector<f64, D>,
    u: &Vec3,
    ts: f64,
    f: impl Fn(&nalgebra::SVector<f64, D>, &Vec3) -> nalgebra::SVector<f64, D>,
) -> nalgebra::SVector<f64, D> {
    x + f(x, u) * ts
}
