//! Binary field dumps for external visualization.
//!
//! Layout, all little-endian:
//!
//! | bytes | content |
//! |-------|---------|
//! | 8 | magic `YEESNAP1` |
//! | 3 × u64 | node counts `nx+1`, `ny+1`, `nz+1` |
//! | f64 | grid spacing in nm |
//! | u64 | time step index |
//! | 6 × f32 arrays | `Ex, Ey, Ez, Hx, Hy, Hz`, each row-major with `i` slowest and `k` fastest |
//!
//! Values at node `(i, j, k)` belong to the staggered position of each
//! component; entries that fall outside the updated range are zero.

use std::io::{Read, Write};

use super::fields::FieldState;
use super::grid::YeeGrid;
use super::{Component, FdtdError};

pub const SNAPSHOT_MAGIC: &[u8; 8] = b"YEESNAP1";

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    /// Node counts per axis.
    pub nodes: [usize; 3],
    pub dx_nm: f64,
    pub step: usize,
    pub fields: [Vec<f32>; 6],
}

impl Snapshot {
    pub fn capture(state: &FieldState, grid: &YeeGrid) -> Self {
        let [nx, ny, nz] = grid.n();
        let fields = Component::ALL.map(|c| {
            let src = state.field(c);
            let mut out = Vec::with_capacity((nx + 1) * (ny + 1) * (nz + 1));
            for i in 0..=nx {
                for j in 0..=ny {
                    let g = grid.dims.idx(i, j, 0);
                    out.extend_from_slice(&src[g..g + nz + 1]);
                }
            }
            out
        });
        Self {
            nodes: [nx + 1, ny + 1, nz + 1],
            dx_nm: grid.dx(),
            step: state.time_index,
            fields,
        }
    }

    pub fn get(&self, comp: usize, i: usize, j: usize, k: usize) -> f32 {
        let [_, ny, nz] = self.nodes;
        self.fields[comp][(i * ny + j) * nz + k]
    }
}

pub fn write_snapshot<W: Write>(mut w: W, s: &Snapshot) -> Result<(), FdtdError> {
    w.write_all(SNAPSHOT_MAGIC)?;
    for n in s.nodes {
        w.write_all(&(n as u64).to_le_bytes())?;
    }
    w.write_all(&s.dx_nm.to_le_bytes())?;
    w.write_all(&(s.step as u64).to_le_bytes())?;
    for f in &s.fields {
        let mut buf = Vec::with_capacity(f.len() * 4);
        for v in f {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

pub fn read_snapshot<R: Read>(mut r: R) -> Result<Snapshot, FdtdError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != SNAPSHOT_MAGIC {
        return Err(FdtdError::Snapshot("bad magic".into()));
    }
    let mut u = [0u8; 8];
    let mut read_u64 = |r: &mut R| -> Result<u64, FdtdError> {
        r.read_exact(&mut u)?;
        Ok(u64::from_le_bytes(u))
    };
    let nodes = [read_u64(&mut r)? as usize, read_u64(&mut r)? as usize, read_u64(&mut r)? as usize];
    let dx_nm = f64::from_bits(read_u64(&mut r)?);
    let step = read_u64(&mut r)? as usize;
    let len = nodes
        .iter()
        .try_fold(1usize, |acc, &n| acc.checked_mul(n))
        .ok_or_else(|| FdtdError::Snapshot("dimensions overflow".into()))?;
    let mut fields: [Vec<f32>; 6] = Default::default();
    for f in &mut fields {
        let mut buf = vec![0u8; len * 4];
        r.read_exact(&mut buf)?;
        *f = buf.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
    }
    Ok(Snapshot {
        nodes,
        dx_nm,
        step,
        fields,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fdtd::{Axis, Boundary};

    #[test]
    fn round_trip() {
        let g = YeeGrid::from_fn([4, 5, 6], 10.0, 0.5, [0.0; 3], [[Boundary::Pec; 2]; 3], 4, 0.0, |_| 1.0).unwrap();
        let mut st = FieldState::new(&g);
        st.set(&g, Component::E(Axis::Y), 2, 3, 4, 1.5);
        st.set(&g, Component::H(Axis::Z), 1, 0, 6, -2.0);
        let snap = Snapshot::capture(&st, &g);
        assert_eq!(snap.get(1, 2, 3, 4), 1.5);
        assert_eq!(snap.get(5, 1, 0, 6), -2.0);
        let mut buf = Vec::new();
        write_snapshot(&mut buf, &snap).unwrap();
        assert_eq!(buf.len(), 8 + 40 + 6 * 4 * 5 * 6 * 7);
        assert_eq!(read_snapshot(buf.as_slice()).unwrap(), snap);
        assert!(read_snapshot(&buf[..20]).is_err());
    }
}
