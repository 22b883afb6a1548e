//! Adiabatic dynamics of a biased qubit-oscillator pair prepared in an
//! entangled coherent (quasi-Bell) superposition.
//!
//! The crate evaluates the reduced qubit state (entanglement entropies),
//! the oscillator Husimi function, and phase-space delocalization measures
//! (Wehrl entropy, inverse second moment) along three parallel routes:
//! exact displaced-Fock series, Jacobi theta closed forms valid in the
//! strong-coupling window, and direct phase-space quadrature. Routes are
//! cross-checked against each other in the test suite.

pub mod delocalization;
pub mod error;
pub mod model;
pub mod parallel;
pub mod phase_space;
pub mod qubit;
pub mod specfun;

pub use delocalization::{
    boxcar, complexity_m2_series, delocalization_record, fit_slopes, m2_from_grid, peak_index,
    smooth, wehrl_entropy, wehrl_floor, weight_ratio, DelocalizationRecord, M2Cutoffs, SlopeFit,
};
pub use error::{Error, Result};
pub use model::{BlockSpectrum, Branch, RegimeReport, SpectrumTable, SystemParams};
pub use phase_space::{
    moments_from_grid, moments_series, moments_theta, oscillator_density, q_linear, q_point, q_series, GridRule,
    GridSpec, MomentMethod, MomentRecord, QGrid, QMethod, QPoint,
};
pub use qubit::{
    linear_entropy, min_entropy_fraction, qubit_record, trace_power_check, von_neumann_entropy, Method,
    QubitSolver, QubitStateRecord, ThetaContext,
};

pub use nalgebra;
pub use num_complex::Complex64;
