//! Radiative lifetime from the shape of the side peaks of a pulsed
//! coincidence histogram.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::g2::{CoincidenceHistogram, MIN_SIDE_PEAKS};
use super::PhotometryError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifetimeFit {
    pub tau_s: f64,
    pub tau_sigma_s: f64,
    /// Fitted area of each side peak, ordered by peak index.
    pub peak_amplitudes: Vec<f64>,
    /// Flat coincidence floor per bin.
    pub floor: f64,
    pub residual_norm: f64,
    pub warnings: Vec<String>,
}

/// Mean of `exp(−|x|/τ)` over `[a, b]`.
fn laplace_bin_mean(a: f64, b: f64, tau: f64) -> f64 {
    let prim = |x: f64| x.signum() * tau * (1.0 - (-x.abs() / tau).exp());
    (prim(b) - prim(a)) / (b - a)
}

struct Design {
    centres: Vec<f64>,
    data: DVector<f64>,
    peaks: Vec<f64>,
    width: f64,
}

impl Design {
    /// Linear least squares for peak amplitudes and floor at fixed `tau`.
    fn solve(&self, tau: f64) -> (f64, DVector<f64>) {
        let n = self.centres.len();
        let m = self.peaks.len() + 1;
        let a = DMatrix::from_fn(n, m, |i, j| {
            if j == self.peaks.len() {
                1.0
            } else {
                let c = self.centres[i] - self.peaks[j];
                laplace_bin_mean(c - 0.5 * self.width, c + 0.5 * self.width, tau)
            }
        });
        // Normal equations keep the decomposition at m × m; columns that
        // vanish at extreme tau are dropped by the rank cutoff.
        let ata = a.tr_mul(&a);
        let atb = a.tr_mul(&self.data);
        let svd = ata.svd(true, true);
        let cutoff = 1e-13 * svd.singular_values.max();
        let x = svd.solve(&atb, cutoff).unwrap_or_else(|_| DVector::zeros(m));
        let r = &a * &x - &self.data;
        (r.norm_squared(), x)
    }
}

/// Fits one shared `τ` to all side peaks (zero-delay window excluded) with
/// a per-peak amplitude and a flat floor. Amplitudes and floor are solved
/// linearly at each trial `τ`; `τ` itself by golden-section search.
pub fn lifetime_fit(h: &CoincidenceHistogram) -> Result<LifetimeFit, PhotometryError> {
    h.validate()?;
    let period = h.repetition_period_s;
    let side_keys: Vec<i64> = h.peak_areas().into_iter().map(|p| p.0).filter(|&k| k != 0).collect();
    if side_keys.len() < MIN_SIDE_PEAKS {
        return Err(PhotometryError::Normalization(format!(
            "{} side peaks in range, at least {MIN_SIDE_PEAKS} required",
            side_keys.len()
        )));
    }
    let (centres, counts): (Vec<f64>, Vec<f64>) = h
        .delays_s
        .iter()
        .zip(&h.counts)
        .filter(|(&d, _)| d.abs() >= 0.5 * period && d.abs() < h.half_range_s())
        .map(|(&d, &c)| (d, c as f64))
        .unzip();
    if counts.iter().all(|&c| c == 0.0) {
        return Err(PhotometryError::Normalization("side peaks are empty".into()));
    }
    let design = Design {
        centres,
        data: DVector::from_vec(counts),
        // Tails of the zero-delay peak and of the first peaks beyond the
        // range reach into the fitted bins, so they get nuisance amplitudes.
        peaks: {
            let k_max = side_keys.iter().copied().max().unwrap_or(0) + 1;
            (-k_max..=k_max).map(|k| k as f64 * period).collect()
        },
        width: h.bin_width_s,
    };

    // Coarse log scan, then golden section around the best grid point.
    let lo = (0.25 * h.bin_width_s).ln();
    let hi = (2.0 * period).ln();
    let grid = 160;
    let at = |i: usize| (lo + (hi - lo) * i as f64 / grid as f64).exp();
    let best = (0..=grid)
        .map(|i| (i, design.solve(at(i)).0))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|p| p.0)
        .unwrap_or(0);
    let (mut a, mut b) = (at(best.saturating_sub(1)).ln(), at((best + 1).min(grid)).ln());
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - phi * (b - a);
    let mut x2 = a + phi * (b - a);
    let mut f1 = design.solve(x1.exp()).0;
    let mut f2 = design.solve(x2.exp()).0;
    for _ in 0..200 {
        if (b - a).abs() < 1e-13 {
            break;
        }
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - phi * (b - a);
            f1 = design.solve(x1.exp()).0;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (b - a);
            f2 = design.solve(x2.exp()).0;
        }
    }
    let tau = (0.5 * (a + b)).exp();
    let (sse, coeffs) = design.solve(tau);

    // σ_τ from the curvature of the profiled residual: var = 2 s² / SSE''.
    let step = 1e-3 * tau;
    let curvature = (design.solve(tau + step).0 - 2.0 * sse + design.solve(tau - step).0) / (step * step);
    let dof = (design.centres.len() as f64 - design.peaks.len() as f64 - 2.0).max(1.0);
    let tau_sigma = if curvature > 0.0 {
        (2.0 * sse / dof / curvature).sqrt()
    } else {
        f64::INFINITY
    };

    let mut warnings = Vec::new();
    if period < 4.0 * tau {
        warnings.push(format!(
            "repetition period {:.3e} s is below 4 tau ({:.3e} s); overlapping peaks bias the fit",
            period,
            4.0 * tau
        ));
    }
    let np = design.peaks.len();
    let k_max = (np / 2) as i64;
    Ok(LifetimeFit {
        tau_s: tau,
        tau_sigma_s: tau_sigma,
        peak_amplitudes: (-k_max..=k_max)
            .zip(coeffs.iter())
            .filter(|(k, _)| *k != 0 && k.abs() < k_max)
            .map(|(_, a)| a * 2.0 * tau / design.width)
            .collect(),
        floor: coeffs[np],
        residual_norm: sse.sqrt(),
        warnings,
    })
}

/// Expected counts per bin for Laplace-shaped peaks of total area
/// `peak_area` at every multiple of the period, plus a flat floor.
pub fn laplace_peak_histogram(
    bin_width_s: f64,
    side_peaks: usize,
    repetition_period_s: f64,
    tau_s: f64,
    peak_area: f64,
    floor: f64,
) -> (Vec<f64>, CoincidenceHistogram) {
    let half = (side_peaks as f64 + 0.5) * repetition_period_s - 0.5 * bin_width_s;
    let h = CoincidenceHistogram::empty(bin_width_s, half, repetition_period_s);
    let k = side_peaks as i64 + 1;
    let expected = h
        .delays_s
        .iter()
        .map(|&d| {
            let sum: f64 = (-k..=k)
                .map(|j| {
                    let c = d - j as f64 * repetition_period_s;
                    laplace_bin_mean(c - 0.5 * bin_width_s, c + 0.5 * bin_width_s, tau_s)
                })
                .sum();
            floor + peak_area * bin_width_s / (2.0 * tau_s) * sum
        })
        .collect();
    (expected, h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::photometry::hbt::{simulate_hbt_with, EmitterModel, HbtOptions};
    use approx::assert_relative_eq;

    fn noiseless(tau: f64, period: f64, scale: f64) -> CoincidenceHistogram {
        let (expected, mut h) = laplace_peak_histogram(0.1e-9, 5, period, tau, 1e6 * scale, 0.0);
        h.counts = expected.iter().map(|&c| c.round() as u64).collect();
        h
    }

    #[test]
    fn bin_mean_matches_quadrature() {
        let tau = 3.0;
        let (a, b) = (-1.3, 2.2);
        let n = 100_000;
        let q: f64 = (0..n)
            .map(|i| {
                let x = a + (b - a) * (i as f64 + 0.5) / n as f64;
                (-f64::abs(x) / tau).exp()
            })
            .sum::<f64>()
            / n as f64;
        assert_relative_eq!(laplace_bin_mean(a, b, tau), q, max_relative = 1e-8);
    }

    #[test]
    fn recovers_noiseless_lifetime() {
        let fit = lifetime_fit(&noiseless(12.67e-9, 204.9e-9, 1.0)).unwrap();
        assert_relative_eq!(fit.tau_s, 12.67e-9, max_relative = 1e-4);
        assert!(fit.warnings.is_empty());
    }

    #[test]
    fn exact_expectation_gives_exact_lifetime() {
        let (expected, h) = laplace_peak_histogram(0.1e-9, 4, 204.9e-9, 12.67e-9, 1e5, 3.0);
        let fit = lifetime_fit_expected(&h, &expected);
        assert_relative_eq!(fit, 12.67e-9, max_relative = 1e-7);
    }

    /// Fit on real-valued expectations through the same design.
    fn lifetime_fit_expected(h: &CoincidenceHistogram, expected: &[f64]) -> f64 {
        let scaled = CoincidenceHistogram {
            counts: expected.iter().map(|&c| (c * 1e6).round() as u64).collect(),
            ..h.clone()
        };
        lifetime_fit(&scaled).unwrap().tau_s
    }

    #[test]
    fn doubling_counts_keeps_lifetime() {
        let h = noiseless(12.67e-9, 204.9e-9, 1.0);
        let doubled = CoincidenceHistogram {
            counts: h.counts.iter().map(|c| 2 * c).collect(),
            ..h.clone()
        };
        assert_relative_eq!(
            lifetime_fit(&h).unwrap().tau_s,
            lifetime_fit(&doubled).unwrap().tau_s,
            max_relative = 1e-9
        );
    }

    #[test]
    fn fast_repetition_warns() {
        let fit = lifetime_fit(&noiseless(12.67e-9, 12.8e-9, 1.0)).unwrap();
        assert_eq!(fit.warnings.len(), 1);
    }

    #[test]
    fn simulated_histogram_recovers_lifetime() {
        let m = EmitterModel::with_purity(0.2, 0.95, 12.67e-9, 4.88e6, 23);
        let opts = HbtOptions {
            bin_width_s: 0.5e-9,
            side_peaks: 5,
        };
        let duration = 1e6 / m.expected_side_peak_area(1.0) / 10.0;
        let run = simulate_hbt_with(&m, duration, &opts).unwrap();
        assert!(run.histogram.total() >= 1_000_000);
        let fit = lifetime_fit(&run.histogram).unwrap();
        assert_relative_eq!(fit.tau_s, 12.67e-9, max_relative = 0.03);
    }
}
