//! The spectral laboratory: box truncations, quantization-based prediction,
//! resolvent validation, the reduced surface equation and cover sums.

pub mod cover;
pub mod finite;
pub mod predict;
pub mod reduced;
pub mod resolvent;

pub use cover::{cover_sum, CoverSum};
pub use finite::{build_finite, build_free, eig_window, EigenPair, FiniteVolumeOperator};
pub use predict::{
    match_spectra, predict_eigenvalues, spectral_density_scan, DensityScan, MatchReport, MatchRules,
    PredictedEigenvalue, Prediction, Predictor, Side,
};
pub use reduced::{reduced_equation_solve, ReducedConfig, ReducedSolution};
pub use resolvent::{resolvent_check, resolvent_check_free, ResolventReport};
