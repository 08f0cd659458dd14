//! Staggered grid, permittivity rasterization and PML profiles.
//!
//! Node `(i, j, k)` sits at `origin + (i, j, k)·Δ` for `0 ≤ i ≤ nx` etc.
//! `Ex` lives at `(i+½, j, k)`, `Hx` at `(i, j+½, k+½)` and so on. Arrays
//! carry one ghost layer on each side so that mirror planes can be handled
//! by filling ghost values instead of branching in the update loops.

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Boundary, SimulationConfig, Structure};
use super::{Axis, Component, FdtdError};

/// Polynomial grading order of the PML conductivity.
const PML_GRADING: i32 = 3;
/// Subsamples per axis when averaging permittivity over an interface cell.
const SUBSAMPLES: usize = 4;
/// Nodes between the bottom of the structure and the bottom monitor, and
/// between the monitor and the PML.
pub(crate) const MONITOR_GAP_CELLS: usize = 3;

/// Array layout with a ghost layer: index `-1..=n` along each axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Dims {
    pub n: [usize; 3],
    pub stride: [usize; 3],
    pub len: usize,
}

impl Dims {
    pub fn new(n: [usize; 3]) -> Self {
        let p = [n[0] + 2, n[1] + 2, n[2] + 2];
        Self {
            n,
            stride: [p[1] * p[2], p[2], 1],
            len: p[0] * p[1] * p[2],
        }
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (i + 1) * self.stride[0] + (j + 1) * self.stride[1] + (k + 1)
    }

    /// Index with ghost coordinates allowed (`-1` maps to the ghost layer).
    #[inline]
    pub fn idx_signed(&self, i: isize, j: isize, k: isize) -> usize {
        ((i + 1) as usize) * self.stride[0] + ((j + 1) as usize) * self.stride[1] + (k + 1) as usize
    }
}

/// CPML update coefficients along one axis, at integer and half-integer positions.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct AxisPml {
    pub low: usize,
    pub high: usize,
    pub b_int: Vec<f32>,
    pub a_int: Vec<f32>,
    pub b_half: Vec<f32>,
    pub a_half: Vec<f32>,
}

impl AxisPml {
    fn new(n: usize, low: usize, high: usize, dt: f64, sigma_max: f64, alpha_max: f64) -> Self {
        let coeff = |x: f64| -> (f32, f32) {
            let depth = if low > 0 && x < low as f64 {
                (low as f64 - x) / low as f64
            } else if high > 0 && x > (n - high) as f64 {
                (x - (n - high) as f64) / high as f64
            } else {
                return (1.0, 0.0);
            };
            let sigma = sigma_max * depth.powi(PML_GRADING);
            let alpha = alpha_max * (1.0 - depth);
            let b = (-(sigma + alpha) * dt).exp();
            let a = if sigma + alpha > 0.0 {
                sigma / (sigma + alpha) * (b - 1.0)
            } else {
                0.0
            };
            (b as f32, a as f32)
        };
        let (b_int, a_int) = (0..=n).map(|i| coeff(i as f64)).unzip();
        let (b_half, a_half) = (0..n).map(|i| coeff(i as f64 + 0.5)).unzip();
        Self {
            low,
            high,
            b_int,
            a_int,
            b_half,
            a_half,
        }
    }

    /// Node index ranges `[lo, hi]` covered by each PML slab.
    pub fn slabs(&self, n: usize) -> Vec<(usize, usize)> {
        let mut v = Vec::new();
        if self.low > 0 {
            v.push((0, self.low));
        }
        if self.high > 0 {
            v.push((n - self.high, n));
        }
        v
    }
}

/// Grid metadata carried into results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridInfo {
    /// Cell counts; nodes run from 0 to n inclusive along each axis.
    pub n: [usize; 3],
    pub dx_nm: f64,
    pub dt_nm: f64,
    pub courant: f64,
    /// Physical position of node (0, 0, 0).
    pub origin_nm: [f64; 3],
    /// `[low, high]` termination per axis.
    pub boundaries: [[Boundary; 2]; 3],
    pub pml_cells: usize,
    pub cells: u64,
    pub memory_mb: f64,
}

impl GridInfo {
    pub fn position(&self, i: f64, j: f64, k: f64) -> Vector3<f64> {
        Vector3::new(
            self.origin_nm[0] + i * self.dx_nm,
            self.origin_nm[1] + j * self.dx_nm,
            self.origin_nm[2] + k * self.dx_nm,
        )
    }

    /// Mirror plane at the low face of `axis`, if any.
    pub fn mirror(&self, axis: Axis) -> Option<Boundary> {
        match self.boundaries[axis.index()][0] {
            Boundary::Pml => None,
            b => Some(b),
        }
    }
}

#[derive(Debug, Clone)]
pub struct YeeGrid {
    pub info: GridInfo,
    pub(crate) dims: Dims,
    /// `Δt/(εΔ)` at the E-component positions.
    pub(crate) ce: [Vec<f32>; 3],
    pub(crate) pml: [AxisPml; 3],
}

/// Rough memory estimate in MB: six field arrays, three coefficient
/// arrays and the PML auxiliary slabs.
pub(crate) fn memory_estimate_mb(n: [usize; 3], pml_cells: usize) -> f64 {
    let d = Dims::new(n);
    let slab: usize = (0..3)
        .map(|a| 2 * (pml_cells + 1) * d.len / (n[a] + 2) * 4)
        .sum();
    ((9 * d.len + slab) * 4) as f64 / 1e6
}

impl YeeGrid {
    /// Grid from explicit dimensions and an index function of position.
    ///
    /// PML slabs of `pml_cells` are placed at every face whose boundary is
    /// `Pml`; `alpha_max` is the complex-frequency-shift parameter.
    #[allow(clippy::too_many_arguments)]
    pub fn from_fn<F>(
        n: [usize; 3],
        dx_nm: f64,
        courant: f64,
        origin_nm: [f64; 3],
        boundaries: [[Boundary; 2]; 3],
        pml_cells: usize,
        alpha_max: f64,
        index_at: F,
    ) -> Result<Self, FdtdError>
    where
        F: Fn(&Vector3<f64>) -> f64 + Sync,
    {
        for a in 0..3 {
            let need = boundaries[a].iter().filter(|b| **b == Boundary::Pml).count() * pml_cells + 2;
            if n[a] < need {
                return Err(FdtdError::InvalidConfig(format!(
                    "axis {a} has {} cells, fewer than the {need} its boundaries need",
                    n[a]
                )));
            }
        }
        let dims = Dims::new(n);
        let dt = courant * dx_nm;
        let sigma_max = 0.8 * (PML_GRADING as f64 + 1.0) / dx_nm;
        let pml = [0, 1, 2].map(|a| {
            let cells = |b: Boundary| if b == Boundary::Pml { pml_cells } else { 0 };
            AxisPml::new(
                n[a],
                cells(boundaries[a][0]),
                cells(boundaries[a][1]),
                dt,
                sigma_max,
                alpha_max,
            )
        });
        let cells = (n[0] * n[1] * n[2]) as u64;
        let info = GridInfo {
            n,
            dx_nm,
            dt_nm: dt,
            courant,
            origin_nm,
            boundaries,
            pml_cells,
            cells,
            memory_mb: memory_estimate_mb(n, pml_cells),
        };
        let ce = [Axis::X, Axis::Y, Axis::Z].map(|c| rasterize(&info, &dims, c, &index_at));
        Ok(Self { info, dims, ce, pml })
    }

    pub fn dx(&self) -> f64 {
        self.info.dx_nm
    }

    pub fn dt(&self) -> f64 {
        self.info.dt_nm
    }

    pub fn n(&self) -> [usize; 3] {
        self.info.n
    }

    /// Relative permittivity at the `E_c` node `(i, j, k)`.
    pub fn permittivity(&self, c: Axis, i: usize, j: usize, k: usize) -> f64 {
        self.info.courant / self.ce[c.index()][self.dims.idx(i, j, k)] as f64
    }

    /// Inclusive node range along `d` on which component `comp` is updated.
    pub(crate) fn update_range(&self, comp: Component, d: Axis) -> (usize, usize) {
        let n = self.info.n[d.index()];
        if comp.is_half(d) {
            return (0, n - 1);
        }
        match comp {
            Component::H(_) => (0, n),
            Component::E(_) => {
                let [lo, hi] = self.info.boundaries[d.index()];
                (
                    if lo == Boundary::Pmc { 0 } else { 1 },
                    if hi == Boundary::Pmc { n } else { n - 1 },
                )
            }
        }
    }
}

fn rasterize<F>(info: &GridInfo, dims: &Dims, c: Axis, index_at: &F) -> Vec<f32>
where
    F: Fn(&Vector3<f64>) -> f64 + Sync,
{
    let comp = Component::E(c);
    let half = |d: Axis| if comp.is_half(d) { 0.5 } else { 0.0 };
    let (hx, hy, hz) = (half(Axis::X), half(Axis::Y), half(Axis::Z));
    let [nx, ny, nz] = info.n;
    let dx = info.dx_nm;
    let mut ce = vec![0f32; dims.len];
    ce.par_chunks_mut(dims.stride[0])
        .enumerate()
        .filter(|(p, _)| *p >= 1 && *p <= nx + 1)
        .for_each(|(p, plane)| {
            let i = p - 1;
            for j in 0..=ny {
                for k in 0..=nz {
                    let centre = info.position(i as f64 + hx, j as f64 + hy, k as f64 + hz);
                    let eps = cell_permittivity(&centre, dx, index_at);
                    plane[(j + 1) * dims.stride[1] + k + 1] = (info.courant / eps) as f32;
                }
            }
        });
    ce
}

/// Volume-averaged `n²` over the cube of side `dx` centred on `p`. Cubes
/// whose corners all see the same medium are taken as uniform.
fn cell_permittivity<F>(p: &Vector3<f64>, dx: f64, index_at: &F) -> f64
where
    F: Fn(&Vector3<f64>) -> f64,
{
    let n0 = index_at(p);
    let h = 0.5 * dx;
    let uniform = (0..8).all(|m| {
        let q = p + Vector3::new(
            if m & 1 == 0 { -h } else { h },
            if m & 2 == 0 { -h } else { h },
            if m & 4 == 0 { -h } else { h },
        );
        index_at(&q) == n0
    });
    if uniform {
        return n0 * n0;
    }
    let s = SUBSAMPLES;
    let off = |q: usize| ((q as f64 + 0.5) / s as f64 - 0.5) * dx;
    let mut sum = 0.0;
    for a in 0..s {
        for b in 0..s {
            for c in 0..s {
                let n = index_at(&(p + Vector3::new(off(a), off(b), off(c))));
                sum += n * n;
            }
        }
    }
    sum / (s * s * s) as f64
}

/// Node-index layout of a config: cell counts, origin, boundaries.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Layout {
    pub n: [usize; 3],
    pub origin: [f64; 3],
    pub boundaries: [[Boundary; 2]; 3],
    pub dx: f64,
}

impl Layout {
    pub fn new(config: &SimulationConfig) -> Result<Self, FdtdError> {
        let dx = config.spacing_nm();
        let pad = config.padding();
        let reference = config.source_origin();
        let src = config.source_position();
        let reach = (config.box_half_width_cells + 2) as f64 * dx;
        // Interior (non-PML) extent per axis in physical coordinates.
        let mut lo = [0.0; 3];
        let mut hi = [0.0; 3];
        match config.structure {
            Structure::Device => {
                let d = &config.device;
                let lateral = config
                    .lateral_half_width_nm
                    .unwrap_or(d.mouth_radius_nm().max(d.focal_length_nm) + pad);
                for a in 0..2 {
                    lo[a] = -lateral;
                    hi[a] = lateral;
                }
                let monitor = -d.height_nm().max(d.focal_length_nm + reach) - MONITOR_GAP_CELLS as f64 * dx;
                lo[2] = monitor - MONITOR_GAP_CELLS as f64 * dx;
                hi[2] = pad.max(dx);
            }
            Structure::Uniform { half_extent_nm, .. } | Structure::Slab { half_extent_nm, .. } => {
                for a in 0..3 {
                    lo[a] = reference[a] - half_extent_nm[a];
                    hi[a] = reference[a] + half_extent_nm[a];
                }
            }
        }
        for a in 0..3 {
            lo[a] = lo[a].min(src[a] - reach);
            hi[a] = hi[a].max(src[a] + reach);
        }
        let p = config.pml_cells as isize;
        let mut n = [0; 3];
        let mut origin = [0.0; 3];
        let mut boundaries = [[Boundary::Pml; 2]; 3];
        for a in 0..3 {
            let axis = Axis::from_index(a);
            let mirror = if a < 2 { config.mirror(axis) } else { None };
            let i_min = match mirror {
                Some(b) => {
                    boundaries[a][0] = b;
                    0
                }
                None => ((lo[a] - reference[a]) / dx).floor() as isize - p,
            };
            let i_max = ((hi[a] - reference[a]) / dx).ceil() as isize + p;
            n[a] = (i_max - i_min) as usize;
            origin[a] = reference[a] + i_min as f64 * dx;
        }
        Ok(Self {
            n,
            origin,
            boundaries,
            dx,
        })
    }

    /// Node index along `axis` nearest to physical coordinate `x`.
    pub fn node(&self, axis: usize, x: f64) -> isize {
        ((x - self.origin[axis]) / self.dx).round() as isize
    }
}

/// Size of the grid a config would allocate, without allocating it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPlan {
    pub n: [usize; 3],
    pub dx_nm: f64,
    pub memory_mb: f64,
}

pub fn plan_grid(config: &SimulationConfig) -> Result<GridPlan, FdtdError> {
    config.validate()?;
    let layout = Layout::new(config)?;
    Ok(GridPlan {
        n: layout.n,
        dx_nm: layout.dx,
        memory_mb: memory_estimate_mb(layout.n, config.pml_cells),
    })
}

/// Rasterizes the config's structure onto a grid sized for it.
pub fn build_grid(config: &SimulationConfig) -> Result<YeeGrid, FdtdError> {
    config.validate()?;
    let layout = Layout::new(config)?;
    build_grid_with_layout(config, &layout)
}

pub(crate) fn build_grid_with_layout(config: &SimulationConfig, layout: &Layout) -> Result<YeeGrid, FdtdError> {
    let required = memory_estimate_mb(layout.n, config.pml_cells);
    if required > config.memory_budget_mb {
        return Err(FdtdError::Oversize {
            cells: layout.n.iter().map(|&v| v as u64).product(),
            required_mb: required,
            budget_mb: config.memory_budget_mb,
        });
    }
    let (omega, _) = config.pulse();
    YeeGrid::from_fn(
        layout.n,
        layout.dx,
        config.courant_factor,
        layout.origin,
        layout.boundaries,
        config.pml_cells,
        0.05 * omega,
        |p| config.index_at(p),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo_optics::ParaboloidDevice;

    fn device_config(resolution: f64) -> SimulationConfig {
        SimulationConfig {
            resolution,
            ..Default::default()
        }
    }

    #[test]
    fn all_air_is_uniform() {
        let g = YeeGrid::from_fn(
            [8, 8, 8],
            10.0,
            0.5,
            [0.0; 3],
            [[Boundary::Pec; 2]; 3],
            4,
            0.0,
            |_| 1.0,
        )
        .unwrap();
        for c in Axis::ALL {
            for i in 0..8 {
                assert_eq!(g.permittivity(c, i, 3, 4), 1.0);
            }
        }
    }

    #[test]
    fn interior_of_reflector_is_diamond() {
        // Δ = 40 nm is coarser than the validated minimum resolution, so the
        // grid is built from the layout directly.
        let c = device_config(637.0 / (2.4 * 40.0));
        let layout = Layout::new(&c).unwrap();
        assert!((layout.dx - 40.0).abs() < 1e-9);
        check_diamond_axis(&build_grid_with_layout(&c, &layout).unwrap());
    }

    fn check_diamond_axis(g: &YeeGrid) {
        let k = ((-2000.0 - g.info.origin_nm[2]) / g.dx()).round() as usize;
        let eps = g.permittivity(Axis::X, 0, 0, k);
        assert!((eps - 5.76).abs() < 1e-5, "{eps}");
    }

    #[test]
    fn wall_cells_are_averaged() {
        let c = device_config(10.0);
        let g = build_grid(&c).unwrap();
        let dx = g.dx();
        // Walk outward along x at 2 µm depth and find a mixed cell.
        let k = ((-2000.0 - g.info.origin_nm[2]) / dx).round() as usize;
        let mixed = (0..g.n()[0])
            .map(|i| g.permittivity(Axis::Z, i, 0, k))
            .filter(|&e| e > 1.0 + 1e-6 && e < 5.76 - 1e-6)
            .count();
        assert!(mixed >= 1);
        let r = ParaboloidDevice::default().mouth_radius_nm();
        assert!(g.info.origin_nm[0] == 0.0 && (g.n()[0] as f64) * dx > r);
    }

    #[test]
    fn substrate_fills_bottom_pml() {
        let g = build_grid(&device_config(10.0)).unwrap();
        let [nx, ny, _] = g.n();
        assert!((g.permittivity(Axis::X, nx - 1, ny - 1, 1) - 5.76).abs() < 1e-5);
        assert!((g.permittivity(Axis::X, nx - 1, ny - 1, g.n()[2] - 1) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn oversize_reports_cells() {
        let c = SimulationConfig {
            memory_budget_mb: 1.0,
            ..device_config(10.0)
        };
        match build_grid(&c) {
            Err(FdtdError::Oversize { cells, .. }) => assert!(cells > 100_000),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn quarter_domain_for_perpendicular_dipole() {
        let layout = Layout::new(&device_config(15.0)).unwrap();
        assert_eq!(layout.boundaries[0][0], Boundary::Pec);
        assert_eq!(layout.boundaries[1][0], Boundary::Pmc);
        assert_eq!(layout.boundaries[2][0], Boundary::Pml);
        assert_eq!(layout.origin[0], 0.0);
        // The focus sits on a node plane.
        let kf = (-100.0 - layout.origin[2]) / layout.dx;
        assert!((kf - kf.round()).abs() < 1e-9);
    }
}
