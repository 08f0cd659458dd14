//! Yee-grid FDTD solver for a dipole inside the paraboloid reflector, with
//! convolutional PML, mirror-symmetry planes, DFT monitors and an
//! angular-spectrum far-field analysis of a plane in the substrate.
//!
//! Units are normalized so that `c = ε₀ = μ₀ = 1`; lengths and times are in
//! nanometres and the vacuum impedance is one.

mod config;
mod farfield;
mod fields;
mod grid;
mod monitor;
mod run;
mod snapshot;

pub use config::{Boundary, Normalization, SimulationConfig, Structure};
pub use farfield::{angular_spectrum, collection_efficiency_fdtd, AngularSpectrum, EfficiencyEntry, FarFieldResult};
pub use fields::{step_fields, FieldState};
pub use grid::{build_grid, plan_grid, GridInfo, GridPlan, YeeGrid};
pub use monitor::{BoxMonitor, DftMonitor, PlaneMonitor};
pub use run::{displacement_sweep, run_dipole_simulation, DipoleRun, DisplacementAxis, SweepPoint};
pub use snapshot::{read_snapshot, write_snapshot, Snapshot, SNAPSHOT_MAGIC};

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum FdtdError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("grid of {cells} cells needs {required_mb:.0} MB, above the {budget_mb:.0} MB budget")]
    Oversize { cells: u64, required_mb: f64, budget_mb: f64 },
    #[error("simulation diverged at step {step}")]
    Diverged { step: usize },
    #[error("monitor misplaced: {0}")]
    Misplaced(String),
    #[error("numerical aperture {na} outside [0, {max}]")]
    InvalidAperture { na: f64, max: f64 },
    #[error("snapshot: {0}")]
    Snapshot(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Axis {
        Self::ALL[i % 3]
    }

    /// Next axis in cyclic order x → y → z → x.
    pub fn next(self) -> Axis {
        Self::from_index(self.index() + 1)
    }

    pub fn prev(self) -> Axis {
        Self::from_index(self.index() + 2)
    }
}

/// Electric or magnetic field component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Component {
    E(Axis),
    H(Axis),
}

impl Component {
    pub const ALL: [Component; 6] = [
        Component::E(Axis::X),
        Component::E(Axis::Y),
        Component::E(Axis::Z),
        Component::H(Axis::X),
        Component::H(Axis::Y),
        Component::H(Axis::Z),
    ];

    /// Whether the component sits at half-integer positions along `d`.
    /// E components are offset along their own axis, H components along the
    /// other two.
    pub fn is_half(self, d: Axis) -> bool {
        match self {
            Component::E(c) => c == d,
            Component::H(c) => c != d,
        }
    }
}
