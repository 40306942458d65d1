//! Synthetic C-arm used by the bundled scenarios and tests.
//!
//! All three joint axes pass through the isocenter (world origin): joint 1
//! turns about z, joint 2 about x and joint 3 about y. The C-arc lies in the
//! x–z plane and opens towards +x; the detector sits at the top end and the
//! X-ray source at the bottom end. Thirteen hulls in total.

use std::f64::consts::PI;

use super::{EndEffectorLimits, Interval, JointLimits, Link, LinkHull, RevoluteJoint, RobotModel};
use crate::geometry::{ConvexHull, HomTransform, Vec3};

pub const ARC_INNER_RADIUS: f64 = 0.75;
pub const ARC_OUTER_RADIUS: f64 = 0.85;
pub const ARC_HALF_THICKNESS: f64 = 0.08;
pub const ARC_SEGMENTS: usize = 6;

fn cuboid_vertices(min: [f64; 3], max: [f64; 3]) -> Vec<Vec3> {
    ConvexHull::cuboid("", Vec3::from(min), Vec3::from(max)).vertices().to_vec()
}

fn link_hull(id: &str, vertices: Vec<Vec3>) -> LinkHull {
    LinkHull::from_link_vertices(id, vertices).expect("reference hulls are non-empty and finite")
}

/// Arc segment between polar angles `a0` and `a1` (measured in the x–z plane from +x towards +z).
fn arc_segment(id: &str, a0: f64, a1: f64) -> LinkHull {
    let mut vertices = Vec::with_capacity(8);
    for a in [a0, a1] {
        for r in [ARC_INNER_RADIUS, ARC_OUTER_RADIUS] {
            for y in [-ARC_HALF_THICKNESS, ARC_HALF_THICKNESS] {
                vertices.push(Vec3::new(r * a.cos(), y, r * a.sin()));
            }
        }
    }
    link_hull(id, vertices)
}

pub fn reference_limits() -> (JointLimits, EndEffectorLimits) {
    (
        JointLimits {
            position: [Interval::symmetric(1.5); 3],
            velocity: [0.3; 3],
            acceleration: [1.0; 3],
            jerk: [10.0; 3],
        },
        EndEffectorLimits { angle: [Interval::symmetric(1.2); 3], velocity: [0.5; 3] },
    )
}

pub fn reference_c_arm() -> RobotModel {
    let joint = |name: &str, axis: Vec3| RevoluteJoint { name: name.into(), origin: HomTransform::identity(), axis };
    let joints = vec![joint("rotation", Vec3::z()), joint("angulation", Vec3::x()), joint("roll", Vec3::y())];

    let stand = Link {
        name: "stand".into(),
        joint: 0,
        hulls: vec![
            link_hull("stand_base", cuboid_vertices([-1.6, -0.3, -1.0], [-1.1, 0.3, -0.9])),
            link_hull("stand_column", cuboid_vertices([-1.5, -0.15, -0.9], [-1.25, 0.15, 0.1])),
            link_hull("stand_arm", cuboid_vertices([-1.5, -0.12, 0.1], [-1.05, 0.12, 0.3])),
        ],
    };
    let carriage = Link {
        name: "carriage".into(),
        joint: 1,
        hulls: vec![
            link_hull("carriage_body", cuboid_vertices([-1.05, -0.2, -0.15], [-0.88, 0.2, 0.15])),
            link_hull("carriage_bracket", cuboid_vertices([-1.1, -0.1, 0.15], [-1.0, 0.1, 0.3])),
        ],
    };
    let mut arc_hulls: Vec<LinkHull> = (0..ARC_SEGMENTS)
        .map(|k| {
            let step = PI / ARC_SEGMENTS as f64;
            let a0 = 0.5 * PI + step * k as f64;
            arc_segment(&format!("arc_{k}"), a0, a0 + step)
        })
        .collect();
    arc_hulls.push(link_hull("detector", cuboid_vertices([-0.22, -0.22, 0.40], [0.22, 0.22, 0.75])));
    arc_hulls.push(link_hull("source", cuboid_vertices([-0.15, -0.15, -0.75], [0.15, 0.15, -0.45])));
    let c_arc = Link { name: "c_arc".into(), joint: 2, hulls: arc_hulls };

    let (joint_limits, ee_limits) = reference_limits();
    RobotModel::new(joints, vec![stand, carriage, c_arc], HomTransform::identity(), joint_limits, ee_limits)
        .expect("reference model is valid")
}

/// Operating table used as the obstacle in the bundled C-arm scenes.
pub fn reference_table() -> ConvexHull {
    ConvexHull::cuboid("table", Vec3::new(-0.3, -1.2, -0.27), Vec3::new(0.3, 1.6, -0.12))
}
