use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{Axis, FdtdError};
use crate::geo_optics::{DipoleSource, ParaboloidDevice};

/// Largest stable Courant number of the 3D Yee scheme is `1/√3`; configs
/// must stay below it by this factor.
pub const COURANT_SAFETY: f64 = 0.99;
pub const MIN_RESOLUTION: f64 = 10.0;

/// Termination of one face of the computational domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Pml,
    /// Perfect electric conductor; also the mirror plane of a dipole normal to it.
    Pec,
    /// Perfect magnetic conductor; also the mirror plane of a dipole lying in it.
    Pmc,
}

/// What the dielectric environment looks like.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Structure {
    /// The reflector described by `SimulationConfig::device`, with the
    /// substrate running through the bottom PML.
    #[default]
    Device,
    /// Homogeneous medium filling a box of the given half-widths around the source.
    Uniform { index: f64, half_extent_nm: [f64; 3] },
    /// Slab of `thickness_nm` centred on the source plane between two half-spaces.
    Slab {
        n_top: f64,
        n_slab: f64,
        n_bottom: f64,
        thickness_nm: f64,
        half_extent_nm: [f64; 3],
    },
}

/// Which emitted power the collected power is divided by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Power leaving the box around the source in the actual structure.
    #[default]
    InStructure,
    /// Box power of the same source in homogeneous diamond (a second run).
    Bulk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationConfig {
    pub device: ParaboloidDevice,
    pub structure: Structure,
    /// Dipole orientation and displacement from the focus; `wavelength_nm`
    /// is the pulse centre.
    pub source: DipoleSource,
    /// Full width at half maximum of the source power spectrum.
    pub bandwidth_nm: f64,
    /// Cells per shortest wavelength inside the densest material.
    pub resolution: f64,
    pub pml_cells: usize,
    pub courant_factor: f64,
    /// Stop once field energy falls below this fraction of its peak.
    pub decay_threshold: f64,
    pub max_steps: usize,
    pub wavelengths_nm: Vec<f64>,
    /// Free space between the structure and the PML; defaults to half the
    /// longest vacuum wavelength.
    pub padding_nm: Option<f64>,
    /// Lateral half-width of the interior region; defaults to the mouth
    /// radius plus padding.
    pub lateral_half_width_nm: Option<f64>,
    /// Half-width of the flux box around the source, in cells.
    pub box_half_width_cells: usize,
    pub normalization: Normalization,
    /// Exploit mirror planes through the source when the dipole allows it.
    pub use_symmetry: bool,
    pub memory_budget_mb: f64,
    /// Capture all six field arrays after this step.
    pub snapshot_step: Option<usize>,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            device: ParaboloidDevice::default(),
            structure: Structure::Device,
            source: DipoleSource::perpendicular(),
            bandwidth_nm: 250.0,
            resolution: 15.0,
            pml_cells: 12,
            courant_factor: 0.5,
            decay_threshold: 1e-4,
            max_steps: 20_000,
            wavelengths_nm: vec![637.0],
            padding_nm: None,
            lateral_half_width_nm: None,
            box_half_width_cells: 4,
            normalization: Normalization::InStructure,
            use_symmetry: true,
            memory_budget_mb: 4096.0,
            snapshot_step: None,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<(), FdtdError> {
        let bad = |m: String| Err(FdtdError::InvalidConfig(m));
        let limit = COURANT_SAFETY / 3f64.sqrt();
        if !(self.courant_factor > 0.0 && self.courant_factor <= limit) {
            return bad(format!("courant factor {} outside (0, {limit:.4}]", self.courant_factor));
        }
        if !(self.resolution >= MIN_RESOLUTION) || !self.resolution.is_finite() {
            return bad(format!("resolution {} below {MIN_RESOLUTION} cells per wavelength", self.resolution));
        }
        if self.pml_cells < 4 {
            return bad(format!("{} PML cells, at least 4 required", self.pml_cells));
        }
        if self.box_half_width_cells < 2 {
            return bad("flux box must be at least 2 cells from the source".into());
        }
        if !(self.decay_threshold > 0.0 && self.decay_threshold < 1.0) || self.max_steps == 0 {
            return bad("decay threshold must lie in (0, 1) and max steps be positive".into());
        }
        if !(self.memory_budget_mb > 0.0) {
            return bad("memory budget must be positive".into());
        }
        let lc = self.source.wavelength_nm;
        let bw = self.bandwidth_nm;
        if !(lc > 0.0) || !(bw > 0.0 && bw < 2.0 * lc) {
            return bad(format!("centre {lc} nm and bandwidth {bw} nm do not describe a pulse"));
        }
        if self.wavelengths_nm.is_empty() {
            return bad("no monitor wavelengths".into());
        }
        for &w in &self.wavelengths_nm {
            if !((w - lc).abs() <= 0.5 * bw + 1e-9) {
                return bad(format!("wavelength {w} nm outside the source band {lc} ± {} nm", 0.5 * bw));
            }
        }
        if let Some(p) = self.padding_nm {
            if !(p >= 0.0) {
                return bad("padding must be >= 0".into());
            }
        }
        if let Some(w) = self.lateral_half_width_nm {
            if !(w > 0.0) {
                return bad("lateral half-width must be positive".into());
            }
        }
        self.source.axis().map_err(|e| FdtdError::InvalidConfig(e.to_string()))?;
        match self.structure {
            Structure::Device => {
                self.device.validate().map_err(|e| FdtdError::InvalidConfig(e.to_string()))?;
                let p = self.source_position();
                if !self.device.contains(&p) {
                    return bad(format!("source at {:?} nm is outside the diamond", p.as_slice()));
                }
            }
            Structure::Uniform { index, half_extent_nm } => {
                if !(index >= 1.0) {
                    return bad(format!("index {index} below 1"));
                }
                check_extent(&half_extent_nm)?;
            }
            Structure::Slab {
                n_top,
                n_slab,
                n_bottom,
                thickness_nm,
                half_extent_nm,
            } => {
                if !(n_top >= 1.0 && n_slab >= 1.0 && n_bottom >= 1.0) || !(thickness_nm > 0.0) {
                    return bad("slab indices must be >= 1 and thickness positive".into());
                }
                check_extent(&half_extent_nm)?;
            }
        }
        Ok(())
    }

    /// Point the source is displaced from: the focus for the device,
    /// the origin otherwise.
    pub fn source_origin(&self) -> Vector3<f64> {
        match self.structure {
            Structure::Device => self.device.focus(),
            _ => Vector3::zeros(),
        }
    }

    pub fn source_position(&self) -> Vector3<f64> {
        self.source_origin() + Vector3::from(self.source.position_nm)
    }

    /// Largest refractive index anywhere in the domain.
    pub fn max_index(&self) -> f64 {
        match self.structure {
            Structure::Device => self.device.n_diamond.max(self.device.n_top),
            Structure::Uniform { index, .. } => index,
            Structure::Slab {
                n_top, n_slab, n_bottom, ..
            } => n_top.max(n_slab).max(n_bottom),
        }
    }

    /// Refractive index at a point.
    pub fn index_at(&self, p: &Vector3<f64>) -> f64 {
        match self.structure {
            Structure::Device => {
                let d = &self.device;
                if p.z <= -d.height_nm() || d.in_body(p) {
                    d.n_diamond
                } else {
                    d.n_top
                }
            }
            Structure::Uniform { index, .. } => index,
            Structure::Slab {
                n_top,
                n_slab,
                n_bottom,
                thickness_nm,
                ..
            } => {
                let z = p.z - self.source_origin().z;
                if z > 0.5 * thickness_nm {
                    n_top
                } else if z < -0.5 * thickness_nm {
                    n_bottom
                } else {
                    n_slab
                }
            }
        }
    }

    /// Index of the half-space holding the bottom monitor.
    pub fn bottom_index(&self) -> f64 {
        match self.structure {
            Structure::Device => self.device.n_diamond,
            Structure::Uniform { index, .. } => index,
            Structure::Slab { n_bottom, .. } => n_bottom,
        }
    }

    pub fn top_index(&self) -> f64 {
        match self.structure {
            Structure::Device => self.device.n_top,
            Structure::Uniform { index, .. } => index,
            Structure::Slab { n_top, .. } => n_top,
        }
    }

    /// Mirror plane through the source normal to `axis`, if the dipole is
    /// either normal to it (PEC) or lies in it (PMC).
    pub fn mirror(&self, axis: Axis) -> Option<Boundary> {
        if !self.use_symmetry {
            return None;
        }
        let i = axis.index();
        if self.source_position()[i] != 0.0 {
            return None;
        }
        let o = self.source.axis().ok()?;
        let along = o[i].abs();
        let across = (o.norm_squared() - o[i] * o[i]).max(0.0).sqrt();
        if across <= 1e-12 {
            Some(Boundary::Pec)
        } else if along <= 1e-12 {
            Some(Boundary::Pmc)
        } else {
            None
        }
    }

    pub fn padding(&self) -> f64 {
        self.padding_nm
            .unwrap_or_else(|| 0.5 * self.wavelengths_nm.iter().copied().fold(0.0, f64::max))
    }

    /// Grid spacing from the resolution and the shortest monitored wavelength.
    pub fn spacing_nm(&self) -> f64 {
        let lmin = self.wavelengths_nm.iter().copied().fold(f64::INFINITY, f64::min);
        lmin / (self.max_index() * self.resolution)
    }

    /// Centre angular frequency and Gaussian envelope time constant of the
    /// pulse `sin(ω₀(t − t₀)) exp(−((t − t₀)/τ)²)`.
    pub fn pulse(&self) -> (f64, f64) {
        let lc = self.source.wavelength_nm;
        let half = 0.5 * self.bandwidth_nm;
        let tau_w = 2.0 * std::f64::consts::PI;
        let d_omega = tau_w / (lc - half) - tau_w / (lc + half);
        let tau = 2.0 * (2.0 * 2f64.ln()).sqrt() / d_omega;
        (tau_w / lc, tau)
    }
}

fn check_extent(e: &[f64; 3]) -> Result<(), FdtdError> {
    if e.iter().all(|&v| v > 0.0 && v.is_finite()) {
        Ok(())
    } else {
        Err(FdtdError::InvalidConfig(format!("half extents {e:?} must be positive")))
    }
}
