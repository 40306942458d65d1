use super::{distance, ConvexHull, GeometryError, HomTransform, Vec3};

pub const DEFAULT_GAMMA0: f64 = 0.5;
pub const MAX_SHRINK_ITERATIONS: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct ShrinkOutcome {
    /// Witness on the original robot hull, in the hull's centroid-origin frame.
    pub r_local: Vec3,
    /// Always `false` on success; kept for parity with the distance query.
    pub collision: bool,
    /// Scale at which the shrunken hulls first separated.
    pub gamma: f64,
    pub iterations: usize,
}

/// Recovers a witness point for a pair of colliding hulls by shrinking both
/// about their centroids until GJK separates them.
///
/// Both hulls are given in their centroid-origin local frames together with
/// their global poses. The scale starts at `gamma0` and is squared after every
/// failed attempt. The shrunken witness is mapped back to the unscaled hull
/// through its barycentric weights, which is the exact `1/γ` expansion without
/// the round-off of dividing by a tiny scale.
pub fn shrink_closest_point(
    robot: &ConvexHull,
    robot_pose: &HomTransform,
    obstacle: &ConvexHull,
    obstacle_pose: &HomTransform,
    gamma0: f64,
) -> Result<ShrinkOutcome, GeometryError> {
    if !(gamma0 > 0.0 && gamma0 < 1.0) {
        return Err(GeometryError::InvalidShrinkFactor(gamma0));
    }
    if !distance(&robot.transformed(robot_pose), &obstacle.transformed(obstacle_pose))?.is_collision() {
        return Err(GeometryError::NotColliding);
    }

    let mut gamma = gamma0;
    for iteration in 1..=MAX_SHRINK_ITERATIONS {
        let shrunk_robot = robot.scaled(gamma).transformed(robot_pose);
        let shrunk_obstacle = obstacle.scaled(gamma).transformed(obstacle_pose);
        if let Some(sep) = distance(&shrunk_robot, &shrunk_obstacle)?.separation() {
            return Ok(ShrinkOutcome {
                r_local: robot.combine(&sep.robot_weights),
                collision: false,
                gamma,
                iterations: iteration,
            });
        }
        gamma *= gamma;
    }
    Err(GeometryError::MaxShrinkIterations(MAX_SHRINK_ITERATIONS))
}
