//! Axisymmetric height profiles sampled on a radial grid.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::FabError;

/// Surface height `z(r)` sampled at strictly ascending radii starting at or
/// after the axis. Positive heights lie above the reference plane.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialProfile {
    radii: Vec<f64>,
    heights: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    r_nm: f64,
    z_nm: f64,
}

impl RadialProfile {
    pub fn new(radii: Vec<f64>, heights: Vec<f64>) -> Result<Self, FabError> {
        if radii.len() != heights.len() {
            return Err(FabError::InvalidProfile(format!(
                "{} radii but {} heights",
                radii.len(),
                heights.len()
            )));
        }
        if radii.is_empty() {
            return Err(FabError::InvalidProfile("profile has no samples".into()));
        }
        if radii[0] < 0.0 {
            return Err(FabError::InvalidProfile(format!("negative radius {}", radii[0])));
        }
        if let Some(w) = radii.windows(2).find(|w| !(w[1] > w[0])) {
            return Err(FabError::InvalidProfile(format!(
                "radii not strictly ascending at {} -> {}",
                w[0], w[1]
            )));
        }
        if radii.iter().chain(&heights).any(|v| !v.is_finite()) {
            return Err(FabError::InvalidProfile("non-finite sample".into()));
        }
        Ok(Self { radii, heights })
    }

    /// Samples `f` on `0, step, 2·step, …` up to and including `r_max`.
    pub fn sample(r_max: f64, step: f64, f: impl Fn(f64) -> f64) -> Result<Self, FabError> {
        if !(step > 0.0) || !(r_max > 0.0) {
            return Err(FabError::InvalidProfile(format!(
                "grid needs positive extent and step, got {r_max} and {step}"
            )));
        }
        let n = (r_max / step).round() as usize + 1;
        let radii: Vec<f64> = (0..n).map(|i| i as f64 * step).collect();
        let heights = radii.iter().map(|&r| f(r)).collect();
        Self::new(radii, heights)
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn heights(&self) -> &[f64] {
        &self.heights
    }

    pub fn len(&self) -> usize {
        self.radii.len()
    }

    pub fn is_empty(&self) -> bool {
        self.radii.is_empty()
    }

    /// Same radii, heights transformed sample by sample.
    pub fn map(&self, f: impl Fn(f64, f64) -> f64) -> Self {
        Self {
            radii: self.radii.clone(),
            heights: self
                .radii
                .iter()
                .zip(&self.heights)
                .map(|(&r, &z)| f(r, z))
                .collect(),
        }
    }

    /// Linear interpolation, clamped to the end values outside the grid.
    pub fn height_at(&self, r: f64) -> f64 {
        let n = self.radii.len();
        if r <= self.radii[0] {
            return self.heights[0];
        }
        if r >= self.radii[n - 1] {
            return self.heights[n - 1];
        }
        let i = self.radii.partition_point(|&x| x <= r) - 1;
        let (r0, r1) = (self.radii[i], self.radii[i + 1]);
        let t = (r - r0) / (r1 - r0);
        self.heights[i] * (1.0 - t) + self.heights[i + 1] * t
    }

    /// This profile's heights resampled onto `other`'s radii.
    pub fn resample_like(&self, other: &RadialProfile) -> Self {
        Self {
            radii: other.radii.clone(),
            heights: other.radii.iter().map(|&r| self.height_at(r)).collect(),
        }
    }

    pub fn max_height(&self) -> f64 {
        self.heights.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_height(&self) -> f64 {
        self.heights.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Volume of revolution `∫ 2π r z dr` by the trapezoidal rule (nm³).
    pub fn volume(&self) -> f64 {
        self.radii
            .windows(2)
            .zip(self.heights.windows(2))
            .map(|(r, z)| {
                std::f64::consts::PI * (r[1] - r[0]) * (r[0] * z[0] + r[1] * z[1])
            })
            .sum()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), FabError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["r_nm", "z_nm"])?;
        for (r, z) in self.radii.iter().zip(&self.heights) {
            w.write_record([format!("{r:.8e}"), format!("{z:.8e}")])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Reads a two-column `r_nm, z_nm` CSV with a header row.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self, FabError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut radii = Vec::new();
        let mut heights = Vec::new();
        for row in rdr.deserialize() {
            let row: Row = row?;
            radii.push(row.r_nm);
            heights.push(row.z_nm);
        }
        Self::new(radii, heights)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rejects_unordered_radii() {
        assert!(RadialProfile::new(vec![0.0, 2.0, 1.0], vec![0.0; 3]).is_err());
        assert!(RadialProfile::new(vec![0.0, 0.0], vec![0.0; 2]).is_err());
        assert!(RadialProfile::new(vec![-1.0, 0.0], vec![0.0; 2]).is_err());
        assert!(RadialProfile::new(vec![0.0], vec![f64::NAN]).is_err());
    }

    #[test]
    fn interpolates_linearly() {
        let p = RadialProfile::new(vec![0.0, 10.0, 20.0], vec![0.0, 10.0, -10.0]).unwrap();
        assert_relative_eq!(p.height_at(5.0), 5.0);
        assert_relative_eq!(p.height_at(15.0), 0.0);
        assert_relative_eq!(p.height_at(100.0), -10.0);
    }

    #[test]
    fn cylinder_volume() {
        let p = RadialProfile::sample(1000.0, 1.0, |_| 2.0).unwrap();
        assert_relative_eq!(p.volume(), std::f64::consts::PI * 1e6 * 2.0, max_relative = 1e-12);
    }

    #[test]
    fn csv_round_trip() {
        let p = RadialProfile::sample(50.0, 0.5, |r| r * r / 400.0 - 3.0).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("r_nm,z_nm\n"));
        let back = RadialProfile::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.len(), p.len());
        for (a, b) in back.heights().iter().zip(p.heights()) {
            assert_relative_eq!(a, b, max_relative = 1e-8, epsilon = 1e-12);
        }
    }
}
