//! Geometrical-optics Monte Carlo model of dipole emission inside a
//! monolithic paraboloid reflector.
//!
//! Coordinates are in nanometres with `z` pointing from the substrate toward
//! the apex. The apex sits at the origin and the focus at `(0, 0, -f)`.

mod collection;
mod device;
mod fresnel;
mod source;
mod trace;

pub use collection::{
    angular_distribution_geo, collection_efficiency_geo, collection_efficiency_with, run_geo,
    AngularHistogram, CollectionEstimate, ExitBudget, GeoRun, MIN_RAYS,
};
pub use device::{paraboloid_intersect, ParaboloidDevice, SurfaceHit, SurfaceTag};
pub use fresnel::{brewster_angle, critical_angle, fresnel_power, FresnelPower, Polarization};
pub use source::{sample_dipole_rays, DipoleSource, Ray};
pub use trace::{trace_ray, BottomFacetModel, ExitRecord, ExitSurface, TraceOptions, TraceOutcome};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum GeoError {
    #[error("invalid device: {0}")]
    InvalidDevice(String),
    #[error("invalid source: {0}")]
    InvalidSource(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("point ({x}, {y}, {z}) nm lies outside the device")]
    OutsideDevice { x: f64, y: f64, z: f64 },
    #[error("numerical aperture {na} is outside (0, {n_bottom}]")]
    InvalidAperture { na: f64, n_bottom: f64 },
}
