//! Least-squares parabola fit of a radial profile.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{FabError, RadialProfile};

pub const MIN_FIT_SAMPLES: usize = 5;

/// `z = z0 ± (r − r0)² / (4f)`, sign given by `opens_upward`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParabolaFit {
    pub focal_length_nm: f64,
    pub apex_r_nm: f64,
    pub apex_z_nm: f64,
    pub rmse_nm: f64,
    pub window_nm: (f64, f64),
    pub opens_upward: bool,
    pub samples: usize,
}

impl ParabolaFit {
    pub fn evaluate(&self, r: f64) -> f64 {
        let sign = if self.opens_upward { 1.0 } else { -1.0 };
        self.apex_z_nm + sign * (r - self.apex_r_nm).powi(2) / (4.0 * self.focal_length_nm)
    }
}

/// Fits `z = c0 + c1 r + c2 r²` over the samples inside `window` (inclusive)
/// and converts the coefficients to focal length and apex position.
pub fn fit_parabola(profile: &RadialProfile, window: (f64, f64)) -> Result<ParabolaFit, FabError> {
    let (lo, hi) = window;
    if !(hi > lo) {
        return Err(FabError::InvalidArgument(format!("empty fit window [{lo}, {hi}]")));
    }
    let (rs, zs): (Vec<f64>, Vec<f64>) = profile
        .radii()
        .iter()
        .zip(profile.heights())
        .filter(|(&r, _)| r >= lo && r <= hi)
        .map(|(&r, &z)| (r, z))
        .unzip();
    let n = rs.len();
    if n < MIN_FIT_SAMPLES {
        return Err(FabError::TooFewSamples { found: n, needed: MIN_FIT_SAMPLES });
    }

    // Regress on a centred, scaled abscissa for conditioning.
    let centre = 0.5 * (rs[0] + rs[n - 1]);
    let scale = (0.5 * (rs[n - 1] - rs[0])).max(f64::MIN_POSITIVE);
    let a = DMatrix::from_fn(n, 3, |i, j| ((rs[i] - centre) / scale).powi(j as i32));
    let b = DVector::from_column_slice(&zs);
    let coeffs = a
        .clone()
        .svd(true, true)
        .solve(&b, 1e-14)
        .map_err(|e| FabError::InvalidArgument(e.to_string()))?;
    let (d0, d1, d2) = (coeffs[0], coeffs[1], coeffs[2]);

    let z_span = zs.iter().fold(0.0f64, |m, z| m.max(z.abs())).max(1.0);
    if d2.abs() <= 1e-12 * z_span {
        return Err(FabError::UnboundedFocalLength);
    }
    // Back to physical units: z = d0 + d1 u + d2 u², u = (r − centre)/scale.
    let c2 = d2 / (scale * scale);
    let u_apex = -d1 / (2.0 * d2);
    let apex_r = centre + u_apex * scale;
    let apex_z = d0 - d1 * d1 / (4.0 * d2);

    let residuals = &a * &coeffs - &b;
    let rmse = (residuals.norm_squared() / n as f64).sqrt();
    Ok(ParabolaFit {
        focal_length_nm: 1.0 / (4.0 * c2.abs()),
        apex_r_nm: apex_r,
        apex_z_nm: apex_z,
        rmse_nm: rmse,
        window_nm: (lo, hi),
        opens_upward: c2 > 0.0,
        samples: n,
    })
}

/// Fit residuals `model − data` for every sample in the fit's window.
pub fn fit_residuals(profile: &RadialProfile, fit: &ParabolaFit) -> Vec<f64> {
    let (lo, hi) = fit.window_nm;
    profile
        .radii()
        .iter()
        .zip(profile.heights())
        .filter(|(&r, _)| r >= lo && r <= hi)
        .map(|(&r, &z)| fit.evaluate(r) - z)
        .collect()
}

/// Default fit window: from the edge of the flat region around the axis out
/// to the radius where the profile has covered 80% of its total relief.
pub fn default_window(profile: &RadialProfile) -> Result<(f64, f64), FabError> {
    let z = profile.heights();
    let r = profile.radii();
    let z_axis = z[0];
    let relief = z.iter().map(|h| (h - z_axis).abs()).fold(0.0, f64::max);
    if relief <= 0.0 {
        return Err(FabError::UnboundedFocalLength);
    }
    let flat_tol = 1e-6 * relief;
    let flat_end = z.iter().position(|h| (h - z_axis).abs() > flat_tol).unwrap_or(z.len());
    let start = r[flat_end.saturating_sub(1)];
    let stop_idx = z
        .iter()
        .position(|h| (h - z_axis).abs() >= 0.8 * relief)
        .unwrap_or(z.len() - 1);
    Ok((start, r[stop_idx]))
}
