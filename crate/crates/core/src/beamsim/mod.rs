//! Static geometrically exact beam solver.

pub mod element;
pub mod rotation;
pub mod scenarios;
pub mod solver;

pub use element::{element_kinematics, element_strain};
pub use scenarios::{bending_bvp, bending_summary, compression_bvp, max_transverse_deflection, BendingSummary};
pub use solver::{solve_bvp, BeamBvp, BeamConstitutive, BeamSolution, BeamState, LoadStep, PannConstitutive, SolverConfig};
