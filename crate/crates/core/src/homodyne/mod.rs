//! Homodyne detection of the dephased, phase-shifted probe.
//!
//! The measured quadrature is `X_θ = (a e^{iθ} + a† e^{−iθ})/2`, realized by
//! applying the band phases `e^{iθ(n−m)}` to the state and reading out
//! `X = (a + a†)/2`. A shift `φ` followed by the oscillator phase `θ` leaves the
//! band phases `e^{−i(φ−θ)(n−m)}`, so every statistic depends on `φ − θ` only.
//! For the real probes used here the variance is also even in `θ`.

mod fisher;
mod grid;
mod montecarlo;
mod variance;

pub use fisher::{
    homodyne_fisher, homodyne_pdf, max_homodyne_fisher, BandProfile, FisherResult, HomodyneSetup,
    COVERAGE_TOLERANCE, PROBABILITY_FLOOR,
};
pub use grid::{covering_half_width, oscillator_wavefunctions, QuadratureGrid, WavefunctionTable, PANEL_ORDER};
pub use montecarlo::{sample_and_estimate, MonteCarloConfig, MonteCarloResult};
pub use variance::{
    noise_regime, noise_threshold, quadrature_variance, variance_map, NoiseRegime, QuadratureMoments, Threshold,
    VarianceMap,
};
