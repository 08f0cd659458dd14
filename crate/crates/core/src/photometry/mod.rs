//! Photon-statistics analysis: saturation fits, g² estimation and
//! decomposition, excitation probability, brightness, lifetime, and a
//! Monte Carlo HBT generator used as the estimators' oracle.

mod brightness;
mod g2;
mod hbt;
mod lifetime;
mod saturation;

pub use brightness::{
    brightness, excitation_probability, BrightnessReport, DETECTOR_EFFICIENCY, SETUP_TRANSMISSION,
};
pub use g2::{
    g2_decompose, g2_from_histogram, g2_from_rates, CoincidenceHistogram, G2Result, SignalBackground,
    MIN_SIDE_PEAKS,
};
pub use hbt::{simulate_hbt, simulate_hbt_with, EmitterModel, HbtOptions, HbtRun, MIN_EXPECTED_COINCIDENCES};
pub use lifetime::{laplace_peak_histogram, lifetime_fit, LifetimeFit};
pub use saturation::{
    compare_background_paths, fit_saturation, fit_saturation_with, saturation_model,
    BackgroundComparison, SaturationDataset, SaturationFit, SaturationFitOptions, SaturationPoint,
    MIN_DISTINCT_POWERS,
};

#[derive(Debug, thiserror::Error)]
pub enum PhotometryError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("{found} distinct data points, at least {needed} required")]
    InsufficientData { found: usize, needed: usize },
    #[error(
        "fit did not converge after {iterations} iterations \
         (F_sat = {f_sat}, P_sat = {p_sat}, slope = {slope})"
    )]
    NoConvergence {
        iterations: usize,
        f_sat: f64,
        p_sat: f64,
        slope: f64,
    },
    #[error("g2(0) = {g2_zero} >= 1 is not consistent with a single emitter")]
    NoSingleEmitter { g2_zero: f64 },
    #[error("cannot normalize histogram: {0}")]
    Normalization(String),
    #[error("brightness {eta0} exceeds 1; check calibration inputs")]
    InconsistentInputs { eta0: f64 },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}
