//! Commutation-angle iterative learning control with basis functions for a
//! simulated piezo-stepper actuator.
//!
//! Everything is indexed by the commutation angle α rather than by time, so a
//! learned feedforward transfers between drive frequencies.

pub mod basis;
pub mod commutation;
pub mod error;
pub mod harness;
pub mod ilc;
pub mod plant;
pub mod quadrature;
pub mod waveform;

pub use basis::{BasisSet, BasisSpec, ParamVector, Role};
pub use commutation::{build_sample_grid, DriveProfile, SampleGrid};
pub use error::{Error, Result};
pub use ilc::{compute_learning_matrices, fit_error, ilc_update, IlcWeights, LearningMatrices};
pub use quadrature::QuadratureSpec;
