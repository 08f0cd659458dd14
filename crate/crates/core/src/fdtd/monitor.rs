//! Running DFTs of tangential fields on planes and closed boxes.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;

use super::config::Boundary;
use super::fields::FieldState;
use super::grid::YeeGrid;
use super::{Axis, Component, FdtdError};

/// DFT of the tangential fields on a grid plane.
///
/// For a plane normal to `a` with `(a, u, v)` cyclic, `E_u` and `H_v` share
/// the lattice that is half-integer along `u` and integer along `v`; `E_v`
/// and `H_u` share the transposed one. H is averaged across the plane and
/// sampled half a step after E, so each product pairs co-located values.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneMonitor {
    pub normal: Axis,
    /// Node index of the plane along `normal`.
    pub index: usize,
    pub position_nm: f64,
    /// Inclusive node ranges along `u = normal.next()` and `v = normal.prev()`.
    pub ranges: [(usize, usize); 2],
    /// Mirror plane at the low end of each tangential range.
    pub mirrors: [Option<Boundary>; 2],
    pub wavelengths_nm: Vec<f64>,
    pub dx_nm: f64,
    /// +1 when flux along `+normal` leaves the source region, −1 otherwise.
    pub outward_sign: f64,
    /// The plane lies in a homogeneous half-space beyond the structure.
    pub in_uniform_region: bool,
    pub(crate) e_u: Vec<Vec<Complex64>>,
    pub(crate) h_v: Vec<Vec<Complex64>>,
    pub(crate) e_v: Vec<Vec<Complex64>>,
    pub(crate) h_u: Vec<Vec<Complex64>>,
}

/// Either kind of DFT monitor.
#[derive(Debug, Clone, PartialEq)]
pub enum DftMonitor {
    Plane(PlaneMonitor),
    Box(BoxMonitor),
}

fn half_len(r: (usize, usize)) -> usize {
    r.1 - r.0
}

fn int_len(r: (usize, usize)) -> usize {
    r.1 - r.0 + 1
}

/// Symmetry of a field component under reflection in a mirror plane
/// normal to `m`: +1 even, −1 odd.
pub(crate) fn parity(comp: Component, m: Axis, mirror: Boundary) -> f64 {
    let (normal, electric) = match comp {
        Component::E(c) => (c == m, true),
        Component::H(c) => (c == m, false),
    };
    // Under a PEC plane, normal E and tangential H are even.
    let even = normal == electric;
    let sign = if even { 1.0 } else { -1.0 };
    match mirror {
        Boundary::Pmc => -sign,
        _ => sign,
    }
}

impl PlaneMonitor {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn new(
        grid: &YeeGrid,
        normal: Axis,
        index: usize,
        ranges: [(usize, usize); 2],
        wavelengths_nm: &[f64],
        outward_sign: f64,
        in_uniform_region: bool,
    ) -> Result<Self, FdtdError> {
        let n = grid.n();
        let (u, v) = (normal.next(), normal.prev());
        if index == 0 || index >= n[normal.index()] {
            return Err(FdtdError::Misplaced(format!("plane index {index} on the domain edge")));
        }
        for (r, ax) in ranges.iter().zip([u, v]) {
            if r.0 >= r.1 || r.1 > n[ax.index()] {
                return Err(FdtdError::Misplaced(format!("range {r:?} invalid along {ax:?}")));
            }
        }
        let mirrors = [u, v].map(|ax| grid.info.mirror(ax));
        let mirrors = [0, 1].map(|q| if ranges[q].0 == 0 { mirrors[q] } else { None });
        let nw = wavelengths_nm.len();
        let p = half_len(ranges[0]) * int_len(ranges[1]);
        let q = int_len(ranges[0]) * half_len(ranges[1]);
        let zeros = |m: usize| vec![vec![Complex64::new(0.0, 0.0); m]; nw];
        Ok(Self {
            normal,
            index,
            position_nm: grid.info.origin_nm[normal.index()] + index as f64 * grid.dx(),
            ranges,
            mirrors,
            wavelengths_nm: wavelengths_nm.to_vec(),
            dx_nm: grid.dx(),
            outward_sign,
            in_uniform_region,
            e_u: zeros(p),
            h_v: zeros(p),
            e_v: zeros(q),
            h_u: zeros(q),
        })
    }

    pub fn tangential_axes(&self) -> [Axis; 2] {
        [self.normal.next(), self.normal.prev()]
    }

    /// Node lattice dimensions `(along u, along v)` of the `E_u/H_v` pair.
    pub fn p_shape(&self) -> (usize, usize) {
        (half_len(self.ranges[0]), int_len(self.ranges[1]))
    }

    /// Node lattice dimensions of the `E_v/H_u` pair.
    pub fn q_shape(&self) -> (usize, usize) {
        (int_len(self.ranges[0]), half_len(self.ranges[1]))
    }

    fn node(&self, along_u: usize, along_v: usize) -> [usize; 3] {
        let mut at = [0; 3];
        at[self.normal.index()] = self.index;
        at[self.normal.next().index()] = along_u;
        at[self.normal.prev().index()] = along_v;
        at
    }

    fn phasors(&self, t: f64, dt: f64) -> Vec<Complex64> {
        self.wavelengths_nm
            .iter()
            .map(|&w| Complex64::from_polar(dt, -2.0 * PI / w * t))
            .collect()
    }

    /// Adds E at time `t` into the running transforms.
    pub(crate) fn accumulate_e(&mut self, state: &FieldState, grid: &YeeGrid, t: f64) {
        let ph = self.phasors(t, grid.dt());
        let (u, v) = (self.normal.next(), self.normal.prev());
        let ([r0, r1], dims) = (self.ranges, &grid.dims);
        let (eu, ev) = (state.field(Component::E(u)), state.field(Component::E(v)));
        let mut l = 0;
        for a in r0.0..r0.1 {
            for b in r1.0..=r1.1 {
                let [i, j, k] = self.node(a, b);
                let x = eu[dims.idx(i, j, k)] as f64;
                for (acc, p) in self.e_u.iter_mut().zip(&ph) {
                    acc[l] += p * x;
                }
                l += 1;
            }
        }
        l = 0;
        for a in r0.0..=r0.1 {
            for b in r1.0..r1.1 {
                let [i, j, k] = self.node(a, b);
                let x = ev[dims.idx(i, j, k)] as f64;
                for (acc, p) in self.e_v.iter_mut().zip(&ph) {
                    acc[l] += p * x;
                }
                l += 1;
            }
        }
    }

    /// Adds H at time `t`, averaged over the two nodes straddling the plane.
    pub(crate) fn accumulate_h(&mut self, state: &FieldState, grid: &YeeGrid, t: f64) {
        let ph = self.phasors(t, grid.dt());
        let (u, v) = (self.normal.next(), self.normal.prev());
        let ([r0, r1], dims) = (self.ranges, &grid.dims);
        let sn = dims.stride[self.normal.index()];
        let (hu, hv) = (state.field(Component::H(u)), state.field(Component::H(v)));
        let mut l = 0;
        for a in r0.0..r0.1 {
            for b in r1.0..=r1.1 {
                let [i, j, k] = self.node(a, b);
                let g = dims.idx(i, j, k);
                let x = 0.5 * (hv[g] as f64 + hv[g - sn] as f64);
                for (acc, p) in self.h_v.iter_mut().zip(&ph) {
                    acc[l] += p * x;
                }
                l += 1;
            }
        }
        l = 0;
        for a in r0.0..=r0.1 {
            for b in r1.0..r1.1 {
                let [i, j, k] = self.node(a, b);
                let g = dims.idx(i, j, k);
                let x = 0.5 * (hu[g] as f64 + hu[g - sn] as f64);
                for (acc, p) in self.h_u.iter_mut().zip(&ph) {
                    acc[l] += p * x;
                }
                l += 1;
            }
        }
    }

    /// Net time-averaged power through the plane along `+normal` at
    /// wavelength index `w`, unfolded over mirror planes. Integer-lattice
    /// nodes at the range ends carry half weight.
    pub fn flux(&self, w: usize) -> f64 {
        let [r0, r1] = self.ranges;
        let end = |x: usize, r: (usize, usize)| if x == r.0 || x == r.1 { 0.5 } else { 1.0 };
        let mut p_sum = 0.0;
        let mut l = 0;
        for _ in r0.0..r0.1 {
            for b in r1.0..=r1.1 {
                p_sum += end(b, r1) * (self.e_u[w][l] * self.h_v[w][l].conj()).re;
                l += 1;
            }
        }
        let mut q_sum = 0.0;
        l = 0;
        for a in r0.0..=r0.1 {
            for _ in r1.0..r1.1 {
                q_sum += end(a, r0) * (self.e_v[w][l] * self.h_u[w][l].conj()).re;
                l += 1;
            }
        }
        let unfold: f64 = self.mirrors.iter().map(|m| if m.is_some() { 2.0 } else { 1.0 }).product();
        0.5 * (p_sum - q_sum) * self.dx_nm * self.dx_nm * unfold
    }

    /// Full-plane arrays `(E_u, H_v, E_v, H_u)` for wavelength `w`, mirrored
    /// across symmetry planes, each as `(values, rows along u, cols along v)`.
    pub(crate) fn unfolded(&self, w: usize) -> [(Vec<Complex64>, usize, usize); 4] {
        let (u, v) = (self.normal.next(), self.normal.prev());
        let p = self.p_shape();
        let q = self.q_shape();
        [
            self.unfold(&self.e_u[w], p, Component::E(u), true, false),
            self.unfold(&self.h_v[w], p, Component::H(v), true, false),
            self.unfold(&self.e_v[w], q, Component::E(v), false, true),
            self.unfold(&self.h_u[w], q, Component::H(u), false, true),
        ]
    }

    fn unfold(
        &self,
        data: &[Complex64],
        shape: (usize, usize),
        comp: Component,
        half_u: bool,
        half_v: bool,
    ) -> (Vec<Complex64>, usize, usize) {
        let axes = self.tangential_axes();
        // Map from full index to (source index, sign) along one axis.
        let axis_map = |len: usize, half: bool, q: usize| -> Vec<(usize, f64)> {
            match self.mirrors[q] {
                None => (0..len).map(|x| (x, 1.0)).collect(),
                Some(b) => {
                    let s = parity(comp, axes[q], b);
                    if half {
                        (0..len).rev().map(|x| (x, s)).chain((0..len).map(|x| (x, 1.0))).collect()
                    } else {
                        (1..len).rev().map(|x| (x, s)).chain((0..len).map(|x| (x, 1.0))).collect()
                    }
                }
            }
        };
        let mu = axis_map(shape.0, half_u, 0);
        let mv = axis_map(shape.1, half_v, 1);
        let mut out = Vec::with_capacity(mu.len() * mv.len());
        for &(a, sa) in &mu {
            for &(b, sb) in &mv {
                out.push(data[a * shape.1 + b] * (sa * sb));
            }
        }
        (out, mu.len(), mv.len())
    }
}

/// Closed box of plane monitors around the source.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxMonitor {
    /// Faces with the sign that turns their `+normal` flux into outward flux.
    pub faces: Vec<(PlaneMonitor, f64)>,
    /// Axes whose low face is the mirror image of the high face.
    pub mirrored: [bool; 3],
}

impl BoxMonitor {
    /// Box spanning nodes `centre ± half` on each axis. When the centre
    /// lies on a mirror plane the low face is not recorded; it carries the
    /// same outward flux as the high face.
    pub(crate) fn new(grid: &YeeGrid, centre: [usize; 3], half: usize, wavelengths_nm: &[f64]) -> Result<Self, FdtdError> {
        let n = grid.n();
        let mut lo = [0; 3];
        let mut hi = [0; 3];
        let mut has_low = [true; 3];
        for a in 0..3 {
            if centre[a] < half {
                if centre[a] != 0 || grid.info.mirror(Axis::from_index(a)).is_none() {
                    return Err(FdtdError::Misplaced(format!(
                        "flux box crosses the low boundary of axis {a}"
                    )));
                }
                has_low[a] = false;
            } else {
                lo[a] = centre[a] - half;
            }
            hi[a] = centre[a] + half;
            if hi[a] >= n[a] {
                return Err(FdtdError::Misplaced(format!("flux box crosses the high boundary of axis {a}")));
            }
        }
        let mut faces = Vec::new();
        for a in Axis::ALL {
            let (u, v) = (a.next(), a.prev());
            let ranges = [(lo[u.index()], hi[u.index()]), (lo[v.index()], hi[v.index()])];
            if has_low[a.index()] {
                faces.push((PlaneMonitor::new(grid, a, lo[a.index()], ranges, wavelengths_nm, -1.0, false)?, -1.0));
            }
            faces.push((PlaneMonitor::new(grid, a, hi[a.index()], ranges, wavelengths_nm, 1.0, false)?, 1.0));
        }
        Ok(Self {
            faces,
            mirrored: has_low.map(|h| !h),
        })
    }

    pub(crate) fn accumulate_e(&mut self, state: &FieldState, grid: &YeeGrid, t: f64) {
        for (f, _) in &mut self.faces {
            f.accumulate_e(state, grid, t);
        }
    }

    pub(crate) fn accumulate_h(&mut self, state: &FieldState, grid: &YeeGrid, t: f64) {
        for (f, _) in &mut self.faces {
            f.accumulate_h(state, grid, t);
        }
    }

    /// Net outward power at wavelength index `w`, unfolded over mirror planes.
    pub fn net_flux(&self, w: usize) -> f64 {
        self.face_fluxes(w).iter().map(|f| f.2).sum()
    }

    /// Outward power through each face, keyed by normal axis and side.
    pub fn face_fluxes(&self, w: usize) -> Vec<(Axis, f64, f64)> {
        let mut out = Vec::with_capacity(6);
        for (f, s) in &self.faces {
            let flux = s * f.flux(w);
            if self.mirrored[f.normal.index()] {
                out.push((f.normal, -1.0, flux));
            }
            out.push((f.normal, *s, flux));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parity_table() {
        let x = Axis::X;
        assert_eq!(parity(Component::E(Axis::X), x, Boundary::Pec), 1.0);
        assert_eq!(parity(Component::E(Axis::Y), x, Boundary::Pec), -1.0);
        assert_eq!(parity(Component::H(Axis::X), x, Boundary::Pec), -1.0);
        assert_eq!(parity(Component::H(Axis::Z), x, Boundary::Pec), 1.0);
        for c in Component::ALL {
            assert_eq!(parity(c, x, Boundary::Pmc), -parity(c, x, Boundary::Pec));
        }
    }
}
