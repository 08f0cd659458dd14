//! Axisymmetric model of the gray-scale reflector fabrication: resist
//! reflow, vertical transfer etches, and a parabola fit of the result.

mod fit;
mod process;
mod profile;

pub use fit::{default_window, fit_parabola, fit_residuals, ParabolaFit, MIN_FIT_SAMPLES};
pub use process::{
    cap_sphere_radius, process_pipeline, process_pipeline_on_grid, reflow_cap_height,
    reflow_profile, reflow_profile_on_grid, transfer_etch, EtchOutcome, EtchStack,
    PipelineReport, PipelineResult, ProcessStep, DEFAULT_GRID_STEP_NM,
};
pub use profile::RadialProfile;

#[derive(Debug, thiserror::Error)]
pub enum FabError {
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("invalid etch stack: {0}")]
    InvalidStack(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("fit window holds {found} samples, at least {needed} required")]
    TooFewSamples { found: usize, needed: usize },
    #[error("profile has no curvature; focal length is unbounded")]
    UnboundedFocalLength,
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}
