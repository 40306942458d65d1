//! Predictive collision avoidance for multi-link robots modeled as unions of
//! convex hulls.
//!
//! The pieces, bottom-up:
//!
//! - [`geometry`]: hulls, rigid transforms, GJK distance and the shrinking
//!   fallback for colliding configurations.
//! - [`kinematics`]: the three-joint chain, its Jacobians and the Euler step.
//! - [`prediction`]: future closest points along the previous plan, point
//!   smoothing and linearized distance prediction.
//! - [`qp`]: a dense dual active-set QP solver.
//! - [`controller`]: the receding-horizon shared controller.
//! - [`simlab`]: scenarios, closed-loop episodes, metrics and statistics.
//! - [`teleop`]: the live shared-control session driven by operator commands.

pub mod geometry;
pub mod kinematics;
pub mod controller;
pub mod prediction;
pub mod qp;
pub mod simlab;
pub mod teleop;
