//! Anisotropic and crystalline mean curvature flow by minimizing movements.
//!
//! Each time step solves a total-variation resolvent problem for the signed
//! distance of the current set and keeps a sublevel set of the solution.

pub mod acceptance;
pub mod atw;
pub mod error;
pub mod geometry;
pub mod levelset;
pub mod norm;
pub mod oracle;
mod sphere;
pub mod tvprox;

pub use error::{FlowError, Result};
pub use atw::{run_flow, FlowConfig, FlowTrace, ForcingSpec, ForcingTerm, StepDiagnostics, Stepper};
pub use geometry::{Front, Grid, ScalarField, SetMask};
pub use levelset::{run_levelset, solve_via_approximation, LevelGrid, LevelSetFunction, LevelSetRun};
pub use norm::{ellipticity_constants, regularize_mobility, Norm, NormSpec};
pub use tvprox::{solve_resolvent, Method, ResolventProblem, ResolventSolution, SolverParams};
