//! Fresnel power coefficients for a planar dielectric interface.

use serde::{Deserialize, Serialize};

use super::GeoError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarization {
    S,
    P,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FresnelPower {
    pub reflectance: f64,
    pub transmittance: f64,
}

/// Critical angle for light travelling from `n1` into `n2`, if one exists.
pub fn critical_angle(n1: f64, n2: f64) -> Option<f64> {
    (n1 > n2).then(|| (n2 / n1).asin())
}

/// Brewster angle for light travelling from `n1` into `n2`.
pub fn brewster_angle(n1: f64, n2: f64) -> f64 {
    (n2 / n1).atan()
}

/// Power reflectance and transmittance at incidence angle `angle` (radians).
///
/// Transmittance is evaluated from the transmitted amplitude and the
/// intensity projection factor, so `R + T = 1` holds as an identity of the
/// formulas rather than by construction. Beyond the critical angle the
/// interface is totally reflecting and `R` is exactly one.
pub fn fresnel_power(
    n1: f64,
    n2: f64,
    angle: f64,
    polarization: Polarization,
) -> Result<FresnelPower, GeoError> {
    if !(n1 > 0.0 && n2 > 0.0) || !n1.is_finite() || !n2.is_finite() {
        return Err(GeoError::InvalidArgument(format!(
            "refractive indices must be positive, got {n1} and {n2}"
        )));
    }
    if !(0.0..=std::f64::consts::FRAC_PI_2).contains(&angle) {
        return Err(GeoError::InvalidArgument(format!(
            "incidence angle {angle} rad outside [0, pi/2]"
        )));
    }
    if critical_angle(n1, n2).is_some_and(|c| angle >= c) {
        return Ok(FresnelPower {
            reflectance: 1.0,
            transmittance: 0.0,
        });
    }
    let cos_i = angle.cos();
    let sin_t = n1 / n2 * angle.sin();
    let cos_t = (1.0 - sin_t * sin_t).max(0.0).sqrt();
    let (r, t) = match polarization {
        Polarization::S => {
            let denom = n1 * cos_i + n2 * cos_t;
            ((n1 * cos_i - n2 * cos_t) / denom, 2.0 * n1 * cos_i / denom)
        }
        Polarization::P => {
            let denom = n2 * cos_i + n1 * cos_t;
            ((n2 * cos_i - n1 * cos_t) / denom, 2.0 * n1 * cos_i / denom)
        }
    };
    let transmittance = if cos_i > 0.0 {
        t * t * (n2 * cos_t) / (n1 * cos_i)
    } else {
        0.0
    };
    Ok(FresnelPower {
        reflectance: r * r,
        transmittance,
    })
}

/// s and p reflectances for a ray with `cos_i` against the interface normal.
/// Unchecked hot-path variant used by the tracer.
#[inline]
pub(crate) fn reflectances(n1: f64, n2: f64, cos_i: f64) -> (f64, f64) {
    let cos_i = cos_i.clamp(0.0, 1.0);
    let sin_i2 = 1.0 - cos_i * cos_i;
    let ratio = n1 / n2;
    let sin_t2 = ratio * ratio * sin_i2;
    if sin_t2 >= 1.0 {
        return (1.0, 1.0);
    }
    let cos_t = (1.0 - sin_t2).sqrt();
    let rs = (n1 * cos_i - n2 * cos_t) / (n1 * cos_i + n2 * cos_t);
    let rp = (n2 * cos_i - n1 * cos_t) / (n2 * cos_i + n1 * cos_t);
    (rs * rs, rp * rp)
}
