//! Pulsed dipole runs and displacement sweeps.

use serde::{Deserialize, Serialize};

use super::config::{Normalization, SimulationConfig, Structure};
use super::farfield::collection_efficiency_fdtd;
use super::fields::{advance, FieldState, SourceNode, CHECK_INTERVAL};
use super::grid::{build_grid_with_layout, GridInfo, Layout, YeeGrid, MONITOR_GAP_CELLS};
use super::monitor::{BoxMonitor, PlaneMonitor};
use super::snapshot::Snapshot;
use super::{Axis, Component, FdtdError};

/// Envelope widths between pulse start and peak, and from peak to turn-off.
const PULSE_DELAY_WIDTHS: f64 = 5.0;

#[derive(Debug, Clone, PartialEq)]
pub struct DipoleRun {
    pub grid: GridInfo,
    pub wavelengths_nm: Vec<f64>,
    /// Flux box around the source in the simulated structure.
    pub flux_box: BoxMonitor,
    /// Plane in the substrate below the device.
    pub bottom: PlaneMonitor,
    /// Plane in the top medium above the device.
    pub top: PlaneMonitor,
    /// Net power leaving the flux box, per wavelength.
    pub box_power: Vec<f64>,
    /// Denominator of the efficiency, per wavelength.
    pub normalization_power: Vec<f64>,
    pub normalization: Normalization,
    pub bottom_index: f64,
    pub top_index: f64,
    pub steps: usize,
    /// Energy fell below the decay threshold before `max_steps`.
    pub decayed: bool,
    pub warnings: Vec<String>,
    pub snapshot: Option<Snapshot>,
}

/// Trilinear spread of a point dipole onto the E lattices. Nodes outside
/// the updated ranges are dropped; on a mirror plane this leaves exactly
/// the share that belongs to the simulated half.
pub(crate) fn dipole_nodes(grid: &YeeGrid, config: &SimulationConfig) -> Result<Vec<SourceNode>, FdtdError> {
    let axis = config.source.axis().map_err(|e| FdtdError::InvalidConfig(e.to_string()))?;
    let pos = config.source_position();
    let dx = grid.dx();
    let mut nodes = Vec::new();
    for c in Axis::ALL {
        let o = axis[c.index()];
        if o == 0.0 {
            continue;
        }
        let comp = Component::E(c);
        let mut per_axis = Vec::new();
        for d in Axis::ALL {
            let half = if comp.is_half(d) { 0.5 } else { 0.0 };
            let f = (pos[d.index()] - grid.info.origin_nm[d.index()]) / dx - half;
            let base = f.floor();
            let t = f - base;
            let (lo, hi) = grid.update_range(comp, d);
            let mut w = Vec::new();
            for (idx, weight) in [(base as isize, 1.0 - t), (base as isize + 1, t)] {
                if weight > 1e-12 && idx >= lo as isize && idx <= hi as isize {
                    w.push((idx as usize, weight));
                } else if weight > 1e-12
                    && ((idx < 0 && grid.info.mirror(d).is_none()) || idx > grid.n()[d.index()] as isize)
                {
                    return Err(FdtdError::InvalidConfig("source outside the grid".into()));
                }
            }
            per_axis.push(w);
        }
        for &(i, wi) in &per_axis[0] {
            for &(j, wj) in &per_axis[1] {
                for &(k, wk) in &per_axis[2] {
                    nodes.push(SourceNode {
                        axis: c,
                        idx: grid.dims.idx(i, j, k),
                        weight: (o * wi * wj * wk / (dx * dx)) as f32,
                    });
                }
            }
        }
    }
    if nodes.is_empty() {
        return Err(FdtdError::InvalidConfig("dipole couples to no updated node".into()));
    }
    Ok(nodes)
}

struct Monitors {
    flux_box: BoxMonitor,
    bottom: PlaneMonitor,
    top: PlaneMonitor,
}

fn place_monitors(config: &SimulationConfig, layout: &Layout, grid: &YeeGrid) -> Result<Monitors, FdtdError> {
    let src = config.source_position();
    let centre = [0, 1, 2].map(|a| layout.node(a, src[a]).max(0) as usize);
    let half = config.box_half_width_cells;
    let wl = &config.wavelengths_nm;
    let flux_box = BoxMonitor::new(grid, centre, half, wl)?;
    let n = grid.n();
    let p = config.pml_cells;
    let lateral = [0, 1].map(|a| {
        let lo = if grid.info.mirror(Axis::from_index(a)).is_some() { 0 } else { p };
        (lo, n[a] - p)
    });
    let dx = grid.dx();
    let (k_bottom, k_top) = match config.structure {
        Structure::Device => {
            let d = &config.device;
            let z_struct = -d.height_nm().max(d.focal_length_nm + (half + 2) as f64 * dx);
            let kb = layout.node(2, z_struct - MONITOR_GAP_CELLS as f64 * dx);
            let kt = n[2] as isize - p as isize - 2;
            (kb, kt)
        }
        Structure::Uniform { .. } => (centre[2] as isize - half as isize - 1, centre[2] as isize + half as isize + 1),
        Structure::Slab { thickness_nm, .. } => {
            let off = ((0.5 * thickness_nm / dx).ceil() as isize + 2).max(half as isize + 1);
            (centre[2] as isize - off, centre[2] as isize + off)
        }
    };
    let in_bounds = |k: isize| k > p as isize && k < (n[2] - p) as isize;
    if !in_bounds(k_bottom) || !in_bounds(k_top) {
        return Err(FdtdError::Misplaced(format!(
            "monitor planes at nodes {k_bottom} and {k_top} fall into the PML"
        )));
    }
    let uniform = |k: isize, z_lim: f64, below: bool| {
        let z = grid.info.origin_nm[2] + k as f64 * dx;
        if below {
            z < z_lim
        } else {
            z > z_lim
        }
    };
    let (bottom_ok, top_ok) = match config.structure {
        Structure::Device => {
            let lowest = -config.device.height_nm().max(config.device.focal_length_nm);
            (uniform(k_bottom, lowest, true), uniform(k_top, 0.0, false))
        }
        Structure::Uniform { .. } => (true, true),
        Structure::Slab { thickness_nm, .. } => (
            uniform(k_bottom, src.z - 0.5 * thickness_nm, true),
            uniform(k_top, src.z + 0.5 * thickness_nm, false),
        ),
    };
    let bottom = PlaneMonitor::new(grid, Axis::Z, k_bottom as usize, lateral, wl, -1.0, bottom_ok)?;
    let top = PlaneMonitor::new(grid, Axis::Z, k_top as usize, lateral, wl, 1.0, top_ok)?;
    Ok(Monitors { flux_box, bottom, top })
}

struct TimeLoop {
    steps: usize,
    decayed: bool,
    snapshot: Option<Snapshot>,
}

/// Per-step monitor callback: fields, E time and H time.
type StepMonitor<'a> = &'a mut dyn FnMut(&FieldState, f64, f64);

fn run_pulse(
    config: &SimulationConfig,
    grid: &YeeGrid,
    nodes: &[SourceNode],
    mut monitors: Vec<StepMonitor<'_>>,
) -> Result<TimeLoop, FdtdError> {
    let (omega, tau) = config.pulse();
    let t0 = PULSE_DELAY_WIDTHS * tau;
    let t_off = t0 + PULSE_DELAY_WIDTHS * tau;
    let dt = grid.dt();
    let mut state = FieldState::new(grid);
    let mut peak: f64 = 0.0;
    let mut decayed = false;
    let mut snapshot = None;
    let mut steps = 0;
    while steps < config.max_steps {
        let t = (steps as f64 + 0.5) * dt;
        let amp = (omega * (t - t0)).sin() * (-((t - t0) / tau).powi(2)).exp();
        advance(&mut state, grid, Some((nodes, amp as f32)));
        steps += 1;
        for m in monitors.iter_mut() {
            m(&state, t, steps as f64 * dt);
        }
        if config.snapshot_step == Some(steps) {
            snapshot = Some(Snapshot::capture(&state, grid));
        }
        if steps % CHECK_INTERVAL == 0 {
            let w = state.energy(grid);
            if !w.is_finite() {
                return Err(FdtdError::Diverged { step: steps });
            }
            peak = peak.max(w);
            if t > t_off && w < config.decay_threshold * peak {
                decayed = true;
                break;
            }
        }
    }
    Ok(TimeLoop {
        steps,
        decayed,
        snapshot,
    })
}

/// Runs the pulsed dipole and returns the DFT monitors with the emitted
/// power used for normalization.
pub fn run_dipole_simulation(config: &SimulationConfig) -> Result<DipoleRun, FdtdError> {
    config.validate()?;
    let layout = Layout::new(config)?;
    let grid = build_grid_with_layout(config, &layout)?;
    let nodes = dipole_nodes(&grid, config)?;
    let Monitors {
        mut flux_box,
        mut bottom,
        mut top,
    } = place_monitors(config, &layout, &grid)?;

    let outcome = {
        let g = &grid;
        let mut fb = |s: &FieldState, th: f64, te: f64| {
            flux_box.accumulate_h(s, g, th);
            flux_box.accumulate_e(s, g, te);
            bottom.accumulate_h(s, g, th);
            bottom.accumulate_e(s, g, te);
            top.accumulate_h(s, g, th);
            top.accumulate_e(s, g, te);
        };
        run_pulse(config, g, &nodes, vec![&mut fb])?
    };
    let mut warnings = Vec::new();
    if !outcome.decayed {
        warnings.push(format!(
            "field energy had not decayed below {:e} of its peak after {} steps",
            config.decay_threshold, outcome.steps
        ));
    }
    let nw = config.wavelengths_nm.len();
    let box_power: Vec<f64> = (0..nw).map(|w| flux_box.net_flux(w)).collect();
    let normalization_power = match config.normalization {
        Normalization::InStructure => box_power.clone(),
        Normalization::Bulk => {
            let n_d = config.device.n_diamond;
            let bulk_cfg = SimulationConfig {
                structure: Structure::Uniform {
                    index: n_d,
                    half_extent_nm: [1.0; 3],
                },
                ..config.clone()
            };
            let bulk_grid = YeeGrid::from_fn(
                layout.n,
                layout.dx,
                config.courant_factor,
                layout.origin,
                layout.boundaries,
                config.pml_cells,
                0.05 * config.pulse().0,
                |_| n_d,
            )?;
            let mut bulk_box = BoxMonitor::new(
                &bulk_grid,
                [0, 1, 2].map(|a| layout.node(a, config.source_position()[a]).max(0) as usize),
                config.box_half_width_cells,
                &config.wavelengths_nm,
            )?;
            let g = &bulk_grid;
            let mut fb = |s: &FieldState, th: f64, te: f64| {
                bulk_box.accumulate_h(s, g, th);
                bulk_box.accumulate_e(s, g, te);
            };
            let bulk = run_pulse(&bulk_cfg, g, &nodes, vec![&mut fb])?;
            if !bulk.decayed {
                warnings.push("bulk reference run did not decay".into());
            }
            (0..nw).map(|w| bulk_box.net_flux(w)).collect()
        }
    };
    Ok(DipoleRun {
        grid: grid.info.clone(),
        wavelengths_nm: config.wavelengths_nm.clone(),
        flux_box,
        bottom,
        top,
        box_power,
        normalization_power,
        normalization: config.normalization,
        bottom_index: config.bottom_index(),
        top_index: config.top_index(),
        steps: outcome.steps,
        decayed: outcome.decayed,
        warnings,
        snapshot: outcome.snapshot,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DisplacementAxis {
    /// Along the reflector axis; positive offsets move the emitter deeper,
    /// away from the apex.
    Vertical,
    /// Along x, the in-plane direction of a perpendicular dipole.
    Lateral,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub offset_nm: f64,
    pub wavelength_nm: f64,
    pub na: f64,
    pub eta: f64,
    /// `eta` divided by the zero-offset value.
    pub relative: f64,
    pub warnings: Vec<String>,
}

/// One simulation per offset, evaluated at the pulse centre wavelength for
/// every aperture in `nas`; points are ordered by offset, then aperture.
/// The zero-offset reference is run as well when it is not in `offsets`.
pub fn displacement_sweep(
    config: &SimulationConfig,
    axis: DisplacementAxis,
    offsets: &[f64],
    nas: &[f64],
) -> Result<Vec<SweepPoint>, FdtdError> {
    let lc = config.source.wavelength_nm;
    let mut base = config.clone();
    if !base.wavelengths_nm.iter().any(|&w| (w - lc).abs() < 1e-9) {
        base.wavelengths_nm.push(lc);
    }
    let etas_at = |offset: f64| -> Result<(Vec<f64>, Vec<String>), FdtdError> {
        let mut c = base.clone();
        let mut p = config.source.position_nm;
        match axis {
            DisplacementAxis::Vertical => p[2] -= offset,
            DisplacementAxis::Lateral => p[0] += offset,
        }
        c.source.position_nm = p;
        let run = run_dipole_simulation(&c)?;
        let ff = collection_efficiency_fdtd(&run, nas)?;
        let etas = nas.iter().map(|&na| ff.eta(lc, na).unwrap_or(f64::NAN)).collect();
        Ok((etas, ff.warnings))
    };
    let mut results = Vec::with_capacity(offsets.len());
    let mut reference = None;
    for &off in offsets {
        let r = etas_at(off)?;
        if off == 0.0 {
            reference = Some(r.0.clone());
        }
        results.push((off, r));
    }
    let reference = match reference {
        Some(r) => r,
        None => etas_at(0.0)?.0,
    };
    let mut points = Vec::with_capacity(offsets.len() * nas.len());
    for (offset_nm, (etas, warnings)) in results {
        for ((&na, &eta), &r) in nas.iter().zip(&etas).zip(&reference) {
            points.push(SweepPoint {
                offset_nm,
                wavelength_nm: lc,
                na,
                eta,
                relative: eta / r,
                warnings: warnings.clone(),
            });
        }
    }
    Ok(points)
}
