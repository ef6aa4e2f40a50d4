//! Rigid pose estimation over the convex hull of SE(2) and SE(3).
//!
//! Rotations are relaxed to their convex hull (the unit disk in the plane,
//! a 4×4 spectrahedron in space) and the least-squares pose problem becomes
//! a small convex program solved by a dedicated barrier method.

pub mod baselines;
pub mod bench;
pub mod estimation;
pub mod geometry;
pub mod pointcloud;
pub mod solver;

pub use baselines::{horn_svd, levenberg_marquardt, pca_align, Alignment, LmConfig, LmResult};
pub use estimation::{
    assemble, center_translation, estimate, estimate_robust, CorrespondenceSet, EstimateReport, EstimationError,
    EstimatorConfig, ProjectionSpec, RelaxationObjective,
};
pub use geometry::{HullPose, RigidPose, RotationHull, SpaceDim};
pub use solver::{solve_hull_qp, LmiQuadraticProgram, SolverConfig, SolverResult, SolverStatus};
