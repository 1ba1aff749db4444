//! Sparse pure-state simulation, reduced density matrices and distances.

mod density;
mod layout;
mod state;

use num_complex::Complex64;

pub(crate) use density::partial_trace_onto;
pub use density::{mix, partial_trace, trace_distance, DensityMatrix, DensityRecord, MixtureAccumulator};
pub use layout::{Register, RegisterLayout};
pub use state::{hadamard_image, real_terms, MeasurementBranch, OutcomeSource, SparseState};

/// Tolerance for norms, traces and every privacy comparison.
pub const NORM_TOL: f64 = 1e-9;
/// Amplitudes and matrix entries below this magnitude are dropped.
pub const PRUNE_TOL: f64 = 1e-12;
/// Local maps on registers up to this width are checked for unitarity.
pub const UNITARITY_CHECK_MAX_WIDTH: usize = 12;

pub(crate) const C_ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub(crate) const C_ONE: Complex64 = Complex64::new(1.0, 0.0);
