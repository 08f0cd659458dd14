//! Dipole emitter and ray sampling from its far-field radiation pattern.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{GeoError, ParaboloidDevice};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DipoleSource {
    /// Emitter displacement from the reflector focus (nm).
    #[serde(default)]
    pub position_nm: [f64; 3],
    /// Dipole axis; normalized on use.
    pub orientation: [f64; 3],
    #[serde(default = "default_wavelength")]
    pub wavelength_nm: f64,
}

fn default_wavelength() -> f64 {
    637.0
}

impl Default for DipoleSource {
    fn default() -> Self {
        Self::perpendicular()
    }
}

impl DipoleSource {
    /// Dipole perpendicular to the reflector axis, at the focus.
    pub fn perpendicular() -> Self {
        Self {
            position_nm: [0.0; 3],
            orientation: [1.0, 0.0, 0.0],
            wavelength_nm: default_wavelength(),
        }
    }

    /// Dipole parallel to the reflector axis, at the focus.
    pub fn parallel() -> Self {
        Self {
            orientation: [0.0, 0.0, 1.0],
            ..Self::perpendicular()
        }
    }

    pub fn with_offset(mut self, offset_nm: [f64; 3]) -> Self {
        self.position_nm = offset_nm;
        self
    }

    pub fn axis(&self) -> Result<Vector3<f64>, GeoError> {
        let v = Vector3::from(self.orientation);
        let norm = v.norm();
        if !norm.is_finite() || norm < 1e-300 {
            return Err(GeoError::InvalidSource(format!(
                "dipole orientation {:?} has no direction",
                self.orientation
            )));
        }
        Ok(v / norm)
    }

    pub fn absolute_position(&self, device: &ParaboloidDevice) -> Vector3<f64> {
        device.focus() + Vector3::from(self.position_nm)
    }
}

/// Geometric-optics ray carried inside the diamond.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vector3<f64>,
    pub direction: Vector3<f64>,
    /// Fraction of the total emitted power carried by this ray.
    pub power_weight: f64,
    /// Unit electric-field direction, orthogonal to `direction`.
    pub polarization: Vector3<f64>,
    pub medium_index: f64,
    pub bounce_count: u32,
}

/// Orthonormal frame `(e1, e2, axis)` around the dipole axis.
#[derive(Debug, Clone, Copy)]
pub(crate) struct DipoleFrame {
    e1: Vector3<f64>,
    e2: Vector3<f64>,
    axis: Vector3<f64>,
}

impl DipoleFrame {
    pub(crate) fn new(axis: Vector3<f64>) -> Self {
        let helper = if axis.x.abs() < 0.9 {
            Vector3::x()
        } else {
            Vector3::y()
        };
        let e1 = (helper - axis * axis.dot(&helper)).normalize();
        let e2 = axis.cross(&e1);
        Self { e1, e2, axis }
    }

    /// Draws one emission direction from the density `(3/8π) sin²ψ` and the
    /// matching far-field polarization.
    pub(crate) fn sample<R: Rng>(&self, rng: &mut R) -> (Vector3<f64>, Vector3<f64>) {
        // cos ψ has density (3/4)(1 - u²) on [-1, 1]; accept with probability 1 - u².
        let cos_psi = loop {
            let u: f64 = rng.gen_range(-1.0..=1.0);
            let accept: f64 = rng.gen();
            if accept <= 1.0 - u * u {
                break u;
            }
        };
        let phi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let sin_psi = (1.0 - cos_psi * cos_psi).max(0.0).sqrt();
        let radial = self.e1 * phi.cos() + self.e2 * phi.sin();
        let dir = (self.axis * cos_psi + radial * sin_psi).normalize();
        let pol = if sin_psi > 1e-12 {
            (self.axis - dir * cos_psi).normalize()
        } else {
            radial.cross(&dir).normalize()
        };
        (dir, pol)
    }
}

/// Per-ray random stream: the ray index selects a ChaCha stream so every ray
/// draws the same numbers regardless of batching or thread scheduling.
pub(crate) fn ray_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub(crate) fn sample_ray(
    frame: &DipoleFrame,
    origin: Vector3<f64>,
    n_medium: f64,
    weight: f64,
    seed: u64,
    index: u64,
) -> Ray {
    let mut rng = ray_rng(seed, index);
    let (direction, polarization) = frame.sample(&mut rng);
    Ray {
        origin,
        direction,
        power_weight: weight,
        polarization,
        medium_index: n_medium,
        bounce_count: 0,
    }
}

/// Rays drawn from the dipole radiation pattern, each carrying `1 / count`
/// of the emitted power. Rays start at the source offset from the origin;
/// callers place them in a device with [`DipoleSource::absolute_position`].
pub fn sample_dipole_rays(
    source: &DipoleSource,
    count: usize,
    seed: u64,
) -> Result<Vec<Ray>, GeoError> {
    if count == 0 {
        return Err(GeoError::InvalidArgument("ray count must be at least 1".into()));
    }
    let frame = DipoleFrame::new(source.axis()?);
    let origin = Vector3::from(source.position_nm);
    let weight = 1.0 / count as f64;
    Ok((0..count as u64)
        .map(|i| sample_ray(&frame, origin, 1.0, weight, seed, i))
        .collect())
}
