//! Beam constitutive modelling with deformable hyperelastic cross-sections
//! and physics-augmented neural beam potentials.

pub mod beamsim;
pub mod continuum;
pub mod dataset;
pub mod error;
pub mod mesh;
pub mod pann;
pub mod rhm;
pub mod sampling;
pub mod section;
pub mod training;
pub mod warping;

pub use error::{Error, Result};
pub use section::{MaterialParams, SectionGeometry, StiffnessMatrix, StrainState, StressResultants};
