//! Indirect optimal control for free-time multi-burn orbital transfers.
//!
//! The crate computes candidate fuel-optimal transfer extremals by single
//! shooting with a quadratic-to-L1 cost homotopy, and certifies strict
//! strong-local optimality of converged bang-bang extremals by a conjugate
//! point scan: a determinant trace along a parameterized family of extremals,
//! transversality products at switching times, and positive definiteness of a
//! tangent-projected matrix at the final manifold.

pub mod dual;
pub mod dynamics;
pub mod flow;
pub mod linalg;
pub mod manifold;
pub mod scale;
pub mod shooting;
pub mod sufficiency;

pub use dynamics::{
    Chart, ControlSample, CostateVector, EngineSpec, Limits, Meoe, StateVector, ThrustBranch,
};
pub use flow::{ExtremalTrajectory, FlowError, IntegratorOpts, SwitchingEvent};
pub use manifold::{TangentBasis, TargetManifold};
pub use scale::ScaleSet;
pub use shooting::{
    ContinuationOpts, ExtremalSolution, ShootingOpts, ShootingResidual, ShootingUnknowns,
    TransferProblem,
};
pub use sufficiency::{DeltaTrace, FamilyBasis, SufficiencyOpts, SufficiencyReport};
