//! Excitation probability under pulsed pumping and the brightness chain
//! from saturated count rate to extracted photons per emission.

use serde::{Deserialize, Serialize};

use super::PhotometryError;

/// Detector efficiency of the reference setup.
pub const DETECTOR_EFFICIENCY: f64 = 0.6868;
/// Optical transmission of the reference setup.
pub const SETUP_TRANSMISSION: f64 = 0.3696;

/// `σ(P) = x/(1+x) · (1 − exp(−τ_p/τ_rad · (1+x)))` with `x = P/P_sat`.
pub fn excitation_probability(
    power_mw: f64,
    p_sat_mw: f64,
    pulse_length_s: f64,
    tau_rad_s: f64,
) -> Result<f64, PhotometryError> {
    for (name, v) in [
        ("power", power_mw),
        ("P_sat", p_sat_mw),
        ("pulse length", pulse_length_s),
        ("radiative lifetime", tau_rad_s),
    ] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(PhotometryError::InvalidInput(format!("{name} = {v} must be > 0")));
        }
    }
    let x = power_mw / p_sat_mw;
    Ok(x / (1.0 + x) * -f64::exp_m1(-pulse_length_s / tau_rad_s * (1.0 + x)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BrightnessReport {
    pub sigma: f64,
    pub detection_probability: f64,
    pub eta_detector: f64,
    pub eta_transmission: f64,
    pub eta_setup: f64,
    pub eta0: f64,
}

/// Detection probability per pulse `F_sat/R` and brightness
/// `η₀ = F_sat / (R · η₁ · η₂ · σ)`.
pub fn brightness(
    f_sat_cps: f64,
    repetition_rate_hz: f64,
    eta_detector: f64,
    eta_transmission: f64,
    sigma: f64,
) -> Result<BrightnessReport, PhotometryError> {
    if !(repetition_rate_hz > 0.0) || !repetition_rate_hz.is_finite() {
        return Err(PhotometryError::InvalidInput(format!(
            "repetition rate {repetition_rate_hz} must be > 0"
        )));
    }
    if !(f_sat_cps >= 0.0) || !f_sat_cps.is_finite() {
        return Err(PhotometryError::InvalidInput(format!("F_sat {f_sat_cps} must be >= 0")));
    }
    for (name, v) in [
        ("eta_detector", eta_detector),
        ("eta_transmission", eta_transmission),
        ("sigma", sigma),
    ] {
        if !(v > 0.0 && v <= 1.0) {
            return Err(PhotometryError::InvalidInput(format!("{name} = {v} outside (0, 1]")));
        }
    }
    let detection_probability = f_sat_cps / repetition_rate_hz;
    let eta_setup = eta_detector * eta_transmission;
    let eta0 = detection_probability / (eta_setup * sigma);
    if eta0 > 1.0 {
        return Err(PhotometryError::InconsistentInputs { eta0 });
    }
    Ok(BrightnessReport {
        sigma,
        detection_probability,
        eta_detector,
        eta_transmission,
        eta_setup,
        eta0,
    })
}
