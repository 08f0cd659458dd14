//! Leapfrog field update with CPML auxiliary variables.

use rayon::prelude::*;

use super::config::Boundary;
use super::grid::{Dims, YeeGrid};
use super::{Axis, Component, FdtdError};

/// Steps between finiteness checks in [`step_fields`].
pub const CHECK_INTERVAL: usize = 50;

/// CPML memory variable for one field component and one derivative axis,
/// restricted to a PML slab.
#[derive(Debug, Clone)]
struct Psi {
    comp: Component,
    d: Axis,
    /// The other field whose difference along `d` feeds this variable.
    source: Axis,
    sign: f32,
    ranges: [(usize, usize); 3],
    data: Vec<f32>,
}

/// Current density applied to one E node per unit pulse amplitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct SourceNode {
    pub axis: Axis,
    pub idx: usize,
    pub weight: f32,
}

#[derive(Debug, Clone)]
pub struct FieldState {
    pub(crate) e: [Vec<f32>; 3],
    pub(crate) h: [Vec<f32>; 3],
    psi_e: Vec<Psi>,
    psi_h: Vec<Psi>,
    /// E is known at `time_index·Δt`, H half a step earlier.
    pub time_index: usize,
}

fn range_len(r: (usize, usize)) -> usize {
    r.1 + 1 - r.0
}

impl FieldState {
    pub fn new(grid: &YeeGrid) -> Self {
        let len = grid.dims.len;
        let mut psi_e = Vec::new();
        let mut psi_h = Vec::new();
        for c in Axis::ALL {
            let (a, b) = (c.next(), c.prev());
            for (d, e_src, e_sign, h_src, h_sign) in [(a, b, 1.0, b, -1.0), (b, a, -1.0, a, 1.0)] {
                let pml = &grid.pml[d.index()];
                for (lo, hi) in pml.slabs(grid.n()[d.index()]) {
                    for (comp, src, sign, out) in [
                        (Component::E(c), e_src, e_sign, &mut psi_e),
                        (Component::H(c), h_src, h_sign, &mut psi_h),
                    ] {
                        let mut ranges = Axis::ALL.map(|ax| grid.update_range(comp, ax));
                        let r = &mut ranges[d.index()];
                        r.0 = r.0.max(lo);
                        r.1 = r.1.min(hi);
                        if r.0 > r.1 {
                            continue;
                        }
                        let size = ranges.iter().map(|&r| range_len(r)).product();
                        out.push(Psi {
                            comp,
                            d,
                            source: src,
                            sign,
                            ranges,
                            data: vec![0.0; size],
                        });
                    }
                }
            }
        }
        Self {
            e: [vec![0.0; len], vec![0.0; len], vec![0.0; len]],
            h: [vec![0.0; len], vec![0.0; len], vec![0.0; len]],
            psi_e,
            psi_h,
            time_index: 0,
        }
    }

    pub fn field(&self, comp: Component) -> &[f32] {
        match comp {
            Component::E(a) => &self.e[a.index()],
            Component::H(a) => &self.h[a.index()],
        }
    }

    pub fn field_mut(&mut self, comp: Component) -> &mut [f32] {
        match comp {
            Component::E(a) => &mut self.e[a.index()],
            Component::H(a) => &mut self.h[a.index()],
        }
    }

    /// Value of a component at node `(i, j, k)`.
    pub fn get(&self, grid: &YeeGrid, comp: Component, i: usize, j: usize, k: usize) -> f32 {
        self.field(comp)[grid.dims.idx(i, j, k)]
    }

    pub fn set(&mut self, grid: &YeeGrid, comp: Component, i: usize, j: usize, k: usize, v: f32) {
        let idx = grid.dims.idx(i, j, k);
        self.field_mut(comp)[idx] = v;
    }

    /// `½Σ εE² + ½Σ H²` times the cell volume, over updated nodes. Nodes
    /// lying on a PEC or PMC face cover half a cell and count half.
    pub fn energy(&self, grid: &YeeGrid) -> f64 {
        let mut total = 0.0;
        for comp in Component::ALL {
            let (arr, ce) = match comp {
                Component::E(a) => (&self.e[a.index()], Some(&grid.ce[a.index()])),
                Component::H(a) => (&self.h[a.index()], None),
            };
            let s = grid.info.courant;
            total += weighted_sum(grid, comp, |q| {
                let v = arr[q] as f64;
                match ce {
                    Some(ce) => s / ce[q] as f64 * v * v,
                    None => v * v,
                }
            });
        }
        0.5 * total * grid.dx().powi(3)
    }
}

/// Per-axis weights of the updated nodes of `comp`: ½ on a closed face.
pub(crate) fn node_weights(grid: &YeeGrid, comp: Component, d: Axis) -> Vec<f64> {
    let (lo, hi) = grid.update_range(comp, d);
    let n = grid.n()[d.index()];
    let [b_lo, b_hi] = grid.info.boundaries[d.index()];
    (lo..=hi)
        .map(|x| {
            let on_closed = !comp.is_half(d)
                && ((x == 0 && b_lo != Boundary::Pml) || (x == n && b_hi != Boundary::Pml));
            if on_closed {
                0.5
            } else {
                1.0
            }
        })
        .collect()
}

/// `Σ w(node)·f(index)` over the updated nodes of `comp`, reduced in a
/// fixed order.
pub(crate) fn weighted_sum<F>(grid: &YeeGrid, comp: Component, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    let ranges = Axis::ALL.map(|ax| grid.update_range(comp, ax));
    let w = Axis::ALL.map(|ax| node_weights(grid, comp, ax));
    let planes: Vec<f64> = (ranges[0].0..=ranges[0].1)
        .into_par_iter()
        .map(|i| {
            let wi = w[0][i - ranges[0].0];
            let mut acc = 0.0f64;
            for j in ranges[1].0..=ranges[1].1 {
                let wij = wi * w[1][j - ranges[1].0];
                let g = grid.dims.idx(i, j, ranges[2].0);
                let mut row = 0.0;
                for (q, wk) in w[2].iter().enumerate() {
                    row += wk * f(g + q);
                }
                acc += wij * row;
            }
            acc
        })
        .collect();
    planes.iter().sum()
}

#[allow(clippy::too_many_arguments)]
fn update_h(dims: &Dims, hc: &mut [f32], eb: &[f32], ea: &[f32], sa: usize, sb: usize, s: f32, r: [(usize, usize); 3]) {
    let s0 = dims.stride[0];
    let len = range_len(r[2]);
    hc.par_chunks_mut(s0).enumerate().for_each(|(p, plane)| {
        if p < r[0].0 + 1 || p > r[0].1 + 1 {
            return;
        }
        let i = p - 1;
        for j in r[1].0..=r[1].1 {
            let g = dims.idx(i, j, r[2].0);
            let l = g - p * s0;
            let out = &mut plane[l..l + len];
            let (eb0, eb1) = (&eb[g..g + len], &eb[g + sa..g + sa + len]);
            let (ea0, ea1) = (&ea[g..g + len], &ea[g + sb..g + sb + len]);
            for q in 0..len {
                out[q] -= s * ((eb1[q] - eb0[q]) - (ea1[q] - ea0[q]));
            }
        }
    });
}

#[allow(clippy::too_many_arguments)]
fn update_e(
    dims: &Dims,
    ec: &mut [f32],
    ce: &[f32],
    hb: &[f32],
    ha: &[f32],
    sa: usize,
    sb: usize,
    r: [(usize, usize); 3],
) {
    let s0 = dims.stride[0];
    let len = range_len(r[2]);
    ec.par_chunks_mut(s0).enumerate().for_each(|(p, plane)| {
        if p < r[0].0 + 1 || p > r[0].1 + 1 {
            return;
        }
        let i = p - 1;
        for j in r[1].0..=r[1].1 {
            let g = dims.idx(i, j, r[2].0);
            let l = g - p * s0;
            let out = &mut plane[l..l + len];
            let cf = &ce[g..g + len];
            let (hb0, hb1) = (&hb[g..g + len], &hb[g - sa..g - sa + len]);
            let (ha0, ha1) = (&ha[g..g + len], &ha[g - sb..g - sb + len]);
            for q in 0..len {
                out[q] += cf[q] * ((hb0[q] - hb1[q]) - (ha0[q] - ha1[q]));
            }
        }
    });
}

/// Applies one CPML correction. For E the difference is backward along
/// `d` and the coefficients sit at integer positions; for H it is forward
/// and they sit at half-integer positions.
#[allow(clippy::too_many_arguments)]
fn apply_psi(dims: &Dims, psi: &mut Psi, target: &mut [f32], src: &[f32], b: &[f32], a: &[f32], scale: Option<&[f32]>, s: f32) {
    let sd = dims.stride[psi.d.index()];
    let electric = matches!(psi.comp, Component::E(_));
    let r = psi.ranges;
    let lk = range_len(r[2]);
    let sign = psi.sign;
    let mut l = 0;
    for i in r[0].0..=r[0].1 {
        for j in r[1].0..=r[1].1 {
            let g = dims.idx(i, j, r[2].0);
            let (lo, hi) = if electric { (g - sd, g) } else { (g, g + sd) };
            let (s0, s1) = (&src[lo..lo + lk], &src[hi..hi + lk]);
            let data = &mut psi.data[l..l + lk];
            // Coefficients vary along k only for a z-slab.
            let (bb, aa) = match psi.d {
                Axis::X => (b[i], a[i]),
                Axis::Y => (b[j], a[j]),
                Axis::Z => (0.0, 0.0),
            };
            if psi.d == Axis::Z {
                let (bs, as_) = (&b[r[2].0..r[2].0 + lk], &a[r[2].0..r[2].0 + lk]);
                for q in 0..lk {
                    data[q] = bs[q] * data[q] + as_[q] * (s1[q] - s0[q]);
                }
            } else {
                for q in 0..lk {
                    data[q] = bb * data[q] + aa * (s1[q] - s0[q]);
                }
            }
            let out = &mut target[g..g + lk];
            match scale {
                Some(ce) => {
                    let ce = &ce[g..g + lk];
                    for q in 0..lk {
                        out[q] += sign * ce[q] * data[q];
                    }
                }
                None => {
                    for q in 0..lk {
                        out[q] += sign * s * data[q];
                    }
                }
            }
            l += lk;
        }
    }
}

/// Mirrors tangential H into the ghost layer of every PMC face so that
/// tangential E on the plane sees an odd H.
fn fill_pmc_ghosts(grid: &YeeGrid, h: &mut [Vec<f32>; 3]) {
    let dims = &grid.dims;
    for d in Axis::ALL {
        let n = grid.n()[d.index()] as isize;
        for (face, b) in grid.info.boundaries[d.index()].iter().enumerate() {
            if *b != Boundary::Pmc {
                continue;
            }
            let (ghost, mirror) = if face == 0 { (-1, 0) } else { (n, n - 1) };
            for c in Axis::ALL.into_iter().filter(|&c| c != d) {
                let arr = &mut h[c.index()];
                let (u, v) = (d.next(), d.prev());
                let (nu, nv) = (grid.n()[u.index()] as isize, grid.n()[v.index()] as isize);
                for p in -1..=nu {
                    for q in -1..=nv {
                        let mut at = [0isize; 3];
                        at[u.index()] = p;
                        at[v.index()] = q;
                        at[d.index()] = mirror;
                        let src = dims.idx_signed(at[0], at[1], at[2]);
                        at[d.index()] = ghost;
                        let dst = dims.idx_signed(at[0], at[1], at[2]);
                        arr[dst] = -arr[src];
                    }
                }
            }
        }
    }
}

/// One leapfrog step. `source` adds `−J` with the given amplitude at
/// the midpoint time of the E update.
pub(crate) fn advance(state: &mut FieldState, grid: &YeeGrid, source: Option<(&[SourceNode], f32)>) {
    let dims = &grid.dims;
    let s = grid.info.courant as f32;
    for c in Axis::ALL {
        let (a, b) = (c.next(), c.prev());
        let r = Axis::ALL.map(|ax| grid.update_range(Component::H(c), ax));
        let [ex, ey, ez] = &state.e;
        let e = [ex, ey, ez];
        update_h(
            dims,
            &mut state.h[c.index()],
            e[b.index()],
            e[a.index()],
            dims.stride[a.index()],
            dims.stride[b.index()],
            s,
            r,
        );
    }
    for psi in &mut state.psi_h {
        let c = match psi.comp {
            Component::H(c) => c,
            Component::E(c) => c,
        };
        let pml = &grid.pml[psi.d.index()];
        apply_psi(
            dims,
            psi,
            &mut state.h[c.index()],
            &state.e[psi.source.index()],
            &pml.b_half,
            &pml.a_half,
            None,
            s,
        );
    }
    fill_pmc_ghosts(grid, &mut state.h);
    for c in Axis::ALL {
        let (a, b) = (c.next(), c.prev());
        let r = Axis::ALL.map(|ax| grid.update_range(Component::E(c), ax));
        let [hx, hy, hz] = &state.h;
        let h = [hx, hy, hz];
        update_e(
            dims,
            &mut state.e[c.index()],
            &grid.ce[c.index()],
            h[b.index()],
            h[a.index()],
            dims.stride[a.index()],
            dims.stride[b.index()],
            r,
        );
    }
    for psi in &mut state.psi_e {
        let c = match psi.comp {
            Component::E(c) => c,
            Component::H(c) => c,
        };
        let pml = &grid.pml[psi.d.index()];
        apply_psi(
            dims,
            psi,
            &mut state.e[c.index()],
            &state.h[psi.source.index()],
            &pml.b_int,
            &pml.a_int,
            Some(&grid.ce[c.index()]),
            s,
        );
    }
    if let Some((nodes, amplitude)) = source {
        for n in nodes {
            let ce = grid.ce[n.axis.index()][n.idx];
            state.e[n.axis.index()][n.idx] -= ce * n.weight * amplitude;
        }
    }
    state.time_index += 1;
}

/// Advances H then E by one time step without sources, checking every
/// [`CHECK_INTERVAL`] steps that the fields are still finite.
pub fn step_fields(state: &mut FieldState, grid: &YeeGrid) -> Result<(), FdtdError> {
    advance(state, grid, None);
    if state.time_index.is_multiple_of(CHECK_INTERVAL) && !state.energy(grid).is_finite() {
        return Err(FdtdError::Diverged { step: state.time_index });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn cavity(boundaries: [[Boundary; 2]; 3], n: usize) -> YeeGrid {
        YeeGrid::from_fn([n; 3], 10.0, 0.5, [0.0; 3], boundaries, 4, 0.0, |p| {
            if p.z < 150.0 {
                1.5
            } else {
                1.0
            }
        })
        .unwrap()
    }

    #[test]
    fn zero_fields_stay_zero() {
        let g = cavity([[Boundary::Pml; 2]; 3], 16);
        let mut s = FieldState::new(&g);
        for _ in 0..60 {
            step_fields(&mut s, &g).unwrap();
        }
        for c in Component::ALL {
            assert!(s.field(c).iter().all(|&v| v == 0.0));
        }
    }

    /// `½Σ ε E^n·E^{n+1} + ½Σ (H^{n+½})²`, the quantity the leapfrog scheme
    /// conserves exactly in a lossless closed region.
    fn staggered_energy(g: &YeeGrid, s: &FieldState, e_prev: &[Vec<f32>; 3]) -> f64 {
        let mut w = 0.0;
        for c in Axis::ALL {
            let (e, p, ce) = (&s.e[c.index()], &e_prev[c.index()], &g.ce[c.index()]);
            w += weighted_sum(g, Component::E(c), |q| g.info.courant / ce[q] as f64 * e[q] as f64 * p[q] as f64);
        }
        let mut h_only = s.clone();
        for e in &mut h_only.e {
            e.iter_mut().for_each(|v| *v = 0.0);
        }
        h_only.energy(g) + 0.5 * w * g.dx().powi(3)
    }

    #[test]
    fn impulse_energy_is_conserved() {
        let b = [
            [Boundary::Pec, Boundary::Pmc],
            [Boundary::Pmc, Boundary::Pec],
            [Boundary::Pec, Boundary::Pec],
        ];
        let g = cavity(b, 30);
        let mut s = FieldState::new(&g);
        s.set(&g, Component::E(Axis::X), 14, 15, 15, 1.0);
        s.set(&g, Component::E(Axis::Z), 10, 12, 20, -0.5);
        let mut e_prev = s.e.clone();
        step_fields(&mut s, &g).unwrap();
        let w0 = staggered_energy(&g, &s, &e_prev);
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            e_prev = s.e.clone();
            step_fields(&mut s, &g).unwrap();
            worst = worst.max((staggered_energy(&g, &s, &e_prev) - w0).abs() / w0);
        }
        assert!(worst < 1e-3, "{worst}");
    }

    /// Once a zero-mean current pulse has ended, energy only leaves
    /// through the PML.
    #[test]
    fn energy_decays_into_pml() {
        let g = cavity([[Boundary::Pml; 2]; 3], 40);
        let mut s = FieldState::new(&g);
        let nodes = [SourceNode {
            axis: Axis::Y,
            idx: g.dims.idx(20, 20, 20),
            weight: 1.0,
        }];
        let (omega, tau) = (2.0 * PI / 200.0, 150.0);
        let t0 = 4.0 * tau;
        let pulse = |n: usize| {
            let t = (n as f64 + 0.5) * g.dt();
            ((omega * (t - t0)).sin() * (-((t - t0) / tau).powi(2)).exp()) as f32
        };
        let off = (2.0 * t0 / g.dt()) as usize;
        for n in 0..off {
            advance(&mut s, &g, Some((&nodes, pulse(n))));
        }
        let mut e_prev = s.e.clone();
        step_fields(&mut s, &g).unwrap();
        let w0 = staggered_energy(&g, &s, &e_prev);
        let mut last = w0;
        for n in 1..600 {
            e_prev = s.e.clone();
            step_fields(&mut s, &g).unwrap();
            let w = staggered_energy(&g, &s, &e_prev);
            assert!(w <= last + 1e-6 * w0, "{n}: {w} > {last}");
            last = w;
        }
        assert!(last < 1e-3 * w0, "{last} vs {w0}");
    }

    #[test]
    fn divergence_is_reported() {
        let g = cavity([[Boundary::Pec; 2]; 3], 10);
        let mut s = FieldState::new(&g);
        s.set(&g, Component::E(Axis::X), 4, 5, 5, f32::NAN);
        let err = (0..CHECK_INTERVAL).try_for_each(|_| step_fields(&mut s, &g)).unwrap_err();
        assert!(matches!(err, FdtdError::Diverged { step: 50 }));
    }

    /// Phase velocity of a plane wave along z between PEC x-walls and PMC
    /// y-walls, which carry the uniform Ex/Hy wave without distortion.
    #[test]
    fn plane_wave_phase_velocity() {
        let n_med = 2.4;
        let lambda = 637.0;
        let dx = lambda / (n_med * 20.0);
        let nz = 200;
        let b = [
            [Boundary::Pec, Boundary::Pec],
            [Boundary::Pmc, Boundary::Pmc],
            [Boundary::Pml, Boundary::Pml],
        ];
        let g = YeeGrid::from_fn([2, 2, nz], dx, 0.5, [0.0; 3], b, 16, 0.0, |_| n_med).unwrap();
        let mut s = FieldState::new(&g);
        let omega = 2.0 * PI / lambda;
        let nodes: Vec<SourceNode> = (0..2)
            .flat_map(|i| (0..=2).map(move |j| (i, j)))
            .map(|(i, j)| SourceNode {
                axis: Axis::X,
                idx: g.dims.idx(i, j, 40),
                weight: 1.0,
            })
            .collect();
        let (k1, k2) = (80, 140);
        let mut acc = [(0.0f64, 0.0f64); 2];
        let ramp = 400.0;
        for n in 0..6000 {
            let t = (n as f64 + 0.5) * g.dt();
            let env = (t / (ramp * g.dt())).min(1.0);
            advance(&mut s, &g, Some((&nodes, (env * (omega * t).sin()) as f32)));
            if n > 3000 {
                let t = (n + 1) as f64 * g.dt();
                for (m, k) in [k1, k2].into_iter().enumerate() {
                    let v = s.get(&g, Component::E(Axis::X), 0, 1, k) as f64;
                    acc[m].0 += v * (omega * t).cos();
                    acc[m].1 -= v * (omega * t).sin();
                }
            }
        }
        let phase = |z: (f64, f64)| z.1.atan2(z.0);
        let mut dphi = phase(acc[0]) - phase(acc[1]);
        while dphi < 0.0 {
            dphi += 2.0 * PI;
        }
        // Add the whole wavelengths between the probes.
        let dist = (k2 - k1) as f64 * dx;
        let guess = omega * n_med * dist;
        let turns = ((guess - dphi) / (2.0 * PI)).round();
        let k_num = (dphi + turns * 2.0 * PI) / dist;
        let v = omega / k_num;
        assert!((v * n_med - 1.0).abs() < 0.01, "v = {v}");
    }

    /// Reflection of a normally incident pulse off the z PML, found by
    /// subtracting a run in a domain long enough that no reflection returns
    /// within the recording window.
    #[test]
    fn pml_reflection_is_small() {
        for n_med in [1.0, 2.4] {
            let r = pml_reflection(n_med);
            assert!(r <= 1e-4, "n = {n_med}: {r}");
        }
    }

    fn pml_reflection(n_med: f64) -> f64 {
        let lambda = 637.0;
        let dx = lambda / (n_med * 15.0);
        let b = [
            [Boundary::Pec, Boundary::Pec],
            [Boundary::Pmc, Boundary::Pmc],
            [Boundary::Pml, Boundary::Pml],
        ];
        let pml = 12;
        let omega = 2.0 * PI / lambda;
        let tau = 3.0 * lambda;
        let t0 = 4.0 * tau;
        let record = |nz: usize| -> Vec<f32> {
            let g = YeeGrid::from_fn([2, 2, nz], dx, 0.5, [0.0; 3], b, pml, 0.05 * omega, |_| n_med).unwrap();
            let mut s = FieldState::new(&g);
            let nodes: Vec<SourceNode> = (0..2)
                .flat_map(|i| (0..=2).map(move |j| (i, j)))
                .map(|(i, j)| SourceNode {
                    axis: Axis::X,
                    idx: g.dims.idx(i, j, pml + 10),
                    weight: 1.0,
                })
                .collect();
            let mut out = Vec::new();
            for n in 0..5000 {
                let t = (n as f64 + 0.5) * g.dt();
                let amp = (omega * (t - t0)).sin() * (-((t - t0) / tau).powi(2)).exp();
                advance(&mut s, &g, Some((&nodes, amp as f32)));
                out.push(s.get(&g, Component::E(Axis::X), 0, 1, pml + 40));
            }
            out
        };
        let short = record(2 * pml + 60);
        let long = record(2 * pml + 60 + 1400);
        let dft = |v: &[f32]| -> f64 {
            let dt = 0.5 * dx;
            let (mut re, mut im) = (0.0, 0.0);
            for (n, &x) in v.iter().enumerate() {
                let t = (n + 1) as f64 * dt;
                re += x as f64 * (omega * t).cos();
                im -= x as f64 * (omega * t).sin();
            }
            re * re + im * im
        };
        let diff: Vec<f32> = short.iter().zip(&long).map(|(a, b)| a - b).collect();
        dft(&diff) / dft(&long)
    }
}
