//! Plane-wave decomposition of a monitor plane and collection efficiency.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::grid::GridInfo;
use super::monitor::PlaneMonitor;
use super::run::DipoleRun;
use super::FdtdError;

/// Zero-padding factor of the transforms; finer k sampling smooths the
/// edge of the collection cone.
pub const PAD_FACTOR: usize = 4;

/// Power per plane wave leaving through a monitor plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngularSpectrum {
    pub wavelength_nm: f64,
    pub medium_index: f64,
    /// Transform sizes along the two tangential axes.
    pub size: [usize; 2],
    /// Spacing of the k grid along each tangential axis (rad/nm).
    pub dk: [f64; 2],
    /// Outward power per k sample, row-major with the first axis slowest,
    /// in standard FFT frequency order. Sums to the plane flux.
    pub power: Vec<f64>,
}

fn fft_freq(m: usize, size: usize) -> f64 {
    if m < size.div_ceil(2) {
        m as f64
    } else {
        m as f64 - size as f64
    }
}

impl AngularSpectrum {
    pub fn k0(&self) -> f64 {
        2.0 * PI / self.wavelength_nm
    }

    pub fn k_parallel(&self, m: usize, n: usize) -> f64 {
        let ku = fft_freq(m, self.size[0]) * self.dk[0];
        let kv = fft_freq(n, self.size[1]) * self.dk[1];
        ku.hypot(kv)
    }

    /// Sum of power over samples with `k∥ ≤ k_max`.
    pub fn power_within(&self, k_max: f64) -> f64 {
        let mut sum = 0.0;
        for m in 0..self.size[0] {
            for n in 0..self.size[1] {
                if self.k_parallel(m, n) <= k_max {
                    sum += self.power[m * self.size[1] + n];
                }
            }
        }
        sum
    }

    /// All samples, evanescent ones included.
    pub fn total(&self) -> f64 {
        self.power.iter().sum()
    }

    /// Power carried by waves that propagate in the monitor medium.
    pub fn propagating(&self) -> f64 {
        self.power_within(self.medium_index * self.k0())
    }

    /// Power inside the cone accepted by a collection optic of numerical
    /// aperture `na` behind a planar interface, `k∥ ≤ NA·k₀`.
    pub fn within_na(&self, na: f64) -> f64 {
        if na <= 0.0 {
            return 0.0;
        }
        self.power_within(na * self.k0())
    }

    /// Power inside the internal half-angle `theta` about the plane normal.
    pub fn within_angle(&self, theta: f64) -> f64 {
        self.power_within(self.medium_index * self.k0() * theta.sin())
    }
}

fn fft2(data: &[Complex64], rows: usize, cols: usize, size: [usize; 2], planner: &mut FftPlanner<f64>) -> Vec<Complex64> {
    let [mu, mv] = size;
    let mut buf = vec![Complex64::new(0.0, 0.0); mu * mv];
    for r in 0..rows {
        buf[r * mv..r * mv + cols].copy_from_slice(&data[r * cols..(r + 1) * cols]);
    }
    let row_fft = planner.plan_fft_forward(mv);
    for r in 0..rows {
        row_fft.process(&mut buf[r * mv..(r + 1) * mv]);
    }
    let col_fft = planner.plan_fft_forward(mu);
    let mut col = vec![Complex64::new(0.0, 0.0); mu];
    for c in 0..mv {
        for r in 0..mu {
            col[r] = buf[r * mv + c];
        }
        col_fft.process(&mut col);
        for r in 0..mu {
            buf[r * mv + c] = col[r];
        }
    }
    buf
}

/// Plane-wave power spectrum of a monitor plane in a homogeneous medium.
///
/// Each tangential E/H pair is transformed on its own lattice; their
/// cross-spectrum gives the power of each plane wave, and by Parseval the
/// samples sum to the plane flux. Evanescent samples carry no net power
/// beyond discretization residue and are excluded by
/// [`AngularSpectrum::propagating`].
pub fn angular_spectrum(plane: &PlaneMonitor, substrate_index: f64) -> Result<Vec<AngularSpectrum>, FdtdError> {
    if !plane.in_uniform_region {
        return Err(FdtdError::Misplaced(format!(
            "plane at {:.1} nm is not in a uniform half-space beyond the apex and emitter",
            plane.position_nm
        )));
    }
    if !(substrate_index >= 1.0) {
        return Err(FdtdError::Misplaced(format!("medium index {substrate_index} below 1")));
    }
    let mut planner = FftPlanner::new();
    let mut out = Vec::with_capacity(plane.wavelengths_nm.len());
    for (w, &lambda) in plane.wavelengths_nm.iter().enumerate() {
        let [eu, hv, ev, hu] = plane.unfolded(w);
        let rows = eu.1.max(ev.1);
        let cols = eu.2.max(ev.2);
        let size = [
            (PAD_FACTOR * rows).next_power_of_two(),
            (PAD_FACTOR * cols).next_power_of_two(),
        ];
        let tf = |f: &(Vec<Complex64>, usize, usize), planner: &mut FftPlanner<f64>| fft2(&f.0, f.1, f.2, size, planner);
        let (feu, fhv, fev, fhu) = (tf(&eu, &mut planner), tf(&hv, &mut planner), tf(&ev, &mut planner), tf(&hu, &mut planner));
        let dx = plane.dx_nm;
        let scale = 0.5 * dx * dx / (size[0] * size[1]) as f64 * plane.outward_sign;
        let power = (0..size[0] * size[1])
            .map(|q| scale * ((feu[q] * fhv[q].conj()).re - (fev[q] * fhu[q].conj()).re))
            .collect();
        out.push(AngularSpectrum {
            wavelength_nm: lambda,
            medium_index: substrate_index,
            size,
            dk: [2.0 * PI / (size[0] as f64 * dx), 2.0 * PI / (size[1] as f64 * dx)],
            power,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyEntry {
    pub wavelength_nm: f64,
    pub na: f64,
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FarFieldResult {
    pub entries: Vec<EfficiencyEntry>,
    /// `(wavelength, total emitted power)` used as the denominator.
    pub total_power: Vec<(f64, f64)>,
    pub grid: GridInfo,
    pub steps: usize,
    pub warnings: Vec<String>,
}

impl FarFieldResult {
    pub fn eta(&self, wavelength_nm: f64, na: f64) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| (e.wavelength_nm - wavelength_nm).abs() < 1e-9 && (e.na - na).abs() < 1e-12)
            .map(|e| e.eta)
    }
}

/// Fraction of emitted power that leaves through the bottom plane within
/// the acceptance cone of each numerical aperture, per wavelength.
pub fn collection_efficiency_fdtd(run: &DipoleRun, nas: &[f64]) -> Result<FarFieldResult, FdtdError> {
    let n_sub = run.bottom_index;
    for &na in nas {
        if !(0.0..=n_sub).contains(&na) {
            return Err(FdtdError::InvalidAperture { na, max: n_sub });
        }
    }
    let spectra = angular_spectrum(&run.bottom, n_sub)?;
    let mut warnings = run.warnings.clone();
    let mut entries = Vec::new();
    for (spec, &total) in spectra.iter().zip(&run.normalization_power) {
        for &na in nas {
            let raw = spec.within_na(na) / total;
            if !(-1e-3..=1.0 + 1e-3).contains(&raw) {
                warnings.push(format!(
                    "efficiency {raw:.4} at {} nm, NA {na} outside [0, 1] before clamping",
                    spec.wavelength_nm
                ));
            }
            entries.push(EfficiencyEntry {
                wavelength_nm: spec.wavelength_nm,
                na,
                eta: raw.clamp(0.0, 1.0),
            });
        }
    }
    Ok(FarFieldResult {
        entries,
        total_power: run.wavelengths_nm.iter().copied().zip(run.normalization_power.iter().copied()).collect(),
        grid: run.grid.clone(),
        steps: run.steps,
        warnings,
    })
}
