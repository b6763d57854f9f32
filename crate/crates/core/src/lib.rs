//! Harmonic-regression analysis of circadian gene expression measured
//! under multiple experimental conditions.
//!
//! The crate fits a first-order Fourier (cosinor) model per condition and
//! provides five tests: rhythmicity within a condition, and differences in
//! rhythmicity, mesor, amplitude, and phase across conditions. The
//! differential tests use finite-sample moment-matched F references that
//! allow condition-specific noise variances and unbalanced designs; the
//! rhythmicity test uses a Monte Carlo reference for a weighted chi-square
//! mixture. A simulation harness reproduces the calibration experiments
//! (type I error, power, FDR/F1) and a pipeline layer runs all tests over
//! an expression matrix with per-family BH adjustment.

pub mod error;
pub mod fdr;
pub mod harmonic;
pub mod hypothesis;
pub mod io;
pub mod moments;
pub mod pipeline;
pub mod satterthwaite;
pub mod seeding;
pub mod sim;
pub mod special;

pub use error::{Error, Result};
pub use harmonic::{
    amplitude_phase, fit_condition, phase_to_hours, ConditionDesign, ConditionFit, PERIOD_HOURS,
};
pub use hypothesis::{
    delta_gradient, test_differential_amplitude, test_differential_mesor,
    test_differential_phase, test_differential_rhythm, test_rhythmicity, TestKind, TestResult,
};
pub use pipeline::{analyze_all, circular_phase_difference, AnalysisConfig, AnalysisTable};
