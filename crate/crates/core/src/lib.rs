//! Measurement-protocol engineering for quantum state tomography.
//!
//! Protocols are built from the face normals of symmetric polyhedra on the
//! Bloch sphere and their tensor powers. The crate simulates Poisson count
//! experiments, reconstructs states by maximum likelihood over
//! purifications, and describes the reconstruction error through the
//! asymptotic fidelity-loss distribution `1 - F = sum_j d_j xi_j^2`.

pub mod adequacy;
pub mod error;
pub mod geometry;
pub mod lossdist;
pub mod numerics;
pub mod protocol;
pub mod reconstruct;
pub mod scan;
pub mod simulate;
pub mod states;











pub use error::{Error, Result};
pub use geometry::{Direction, PolyhedronKind};
pub use lossdist::LossCoefficients;
pub use num_complex::Complex64;
pub use numerics::ComplexMatrix;
pub use protocol::{InstrumentalMatrix, MeasurementMatrix};
pub use reconstruct::{MleOptions, ReconstructionResult};
pub use simulate::CountRecord;
pub use states::{DensityMatrix, Purification};
