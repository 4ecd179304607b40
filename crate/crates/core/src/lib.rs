//! Dynamically feasible motion retargeting for humanoid robots.
//!
//! The crate turns a keypoint trajectory (for example markers extracted from
//! a human video) into a robot configuration trajectory by one of three
//! methods:
//!
//! * geometric retargeting (GR): per-frame damped least-squares inverse
//!   kinematics, see [`kinematics::geometric_retarget`];
//! * indirect dynamic retargeting (IDR): a sampling MPC that tracks the GR
//!   keypoints inside a contact simulator;
//! * direct dynamic retargeting (DDR): the same MPC tracking the original
//!   keypoints directly, see [`cem::plan_receding_horizon`].
//!
//! Every trajectory can then be scored with an independent feasibility
//! checker ([`feasibility`]) and the tracking metrics in [`metrics`].

pub mod cem;
pub mod cost;
pub mod dynamics;
pub mod feasibility;
pub mod fixtures;
pub mod kinematics;
pub mod metrics;
pub mod model;
pub mod qp;
pub mod reference;
pub mod spatial;

mod error;

pub use error::{Error, Result};

pub use cem::{CemConfig, ExecutePolicy, PlanDiagnostics, RetargetMode};
pub use cost::{CostWeights, LaplacianMatrix};
pub use dynamics::{ContactModelParams, ControlMode, ControlSequence, DynamicsConfig, State, Trajectory};
pub use feasibility::{ContactSequence, FeasibilityReport, FeasibilityTolerances, FeasibilityVerdict};
pub use kinematics::{Configuration, IkOptions, KeypointSet, KeypointTrajectory};
pub use metrics::{AggregateReport, MetricsReport, RewardBreakdown};
pub use model::{BaseJoint, RobotModel, ValidationReport};
