//! Saturation curve `F(P) = F_sat / (1 + P_sat/P) + c·P` and its
//! bound-constrained Levenberg–Marquardt fit.

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::PhotometryError;

pub const MIN_DISTINCT_POWERS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaturationPoint {
    pub power_mw: f64,
    pub counts_per_s: f64,
    pub sigma_cps: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaturationDataset {
    pub points: Vec<SaturationPoint>,
    pub repetition_rate_hz: f64,
    pub pulse_length_s: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    #[serde(rename = "P_mW")]
    power_mw: f64,
    #[serde(rename = "F_cps")]
    counts_per_s: f64,
    #[serde(rename = "sigma_cps", default)]
    sigma_cps: Option<f64>,
}

impl SaturationDataset {
    pub fn new(points: Vec<SaturationPoint>, repetition_rate_hz: f64, pulse_length_s: f64) -> Self {
        Self {
            points,
            repetition_rate_hz,
            pulse_length_s,
        }
    }

    /// Reads `P_mW, F_cps[, sigma_cps]` rows with a header.
    pub fn read_csv<R: std::io::Read>(
        reader: R,
        repetition_rate_hz: f64,
        pulse_length_s: f64,
    ) -> Result<Self, PhotometryError> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(reader);
        let mut points = Vec::new();
        for row in rdr.deserialize() {
            let row: CsvRow = row?;
            points.push(SaturationPoint {
                power_mw: row.power_mw,
                counts_per_s: row.counts_per_s,
                sigma_cps: row.sigma_cps,
            });
        }
        Ok(Self::new(points, repetition_rate_hz, pulse_length_s))
    }

    pub fn validate(&self) -> Result<(), PhotometryError> {
        for p in &self.points {
            if !(p.power_mw > 0.0) || !p.power_mw.is_finite() {
                return Err(PhotometryError::InvalidInput(format!("power {} mW must be > 0", p.power_mw)));
            }
            if !(p.counts_per_s >= 0.0) || !p.counts_per_s.is_finite() {
                return Err(PhotometryError::InvalidInput(format!(
                    "count rate {} must be >= 0",
                    p.counts_per_s
                )));
            }
            if let Some(s) = p.sigma_cps {
                if !(s > 0.0) || !s.is_finite() {
                    return Err(PhotometryError::InvalidInput(format!("sigma {s} must be > 0")));
                }
            }
        }
        let mut powers: Vec<f64> = self.points.iter().map(|p| p.power_mw).collect();
        powers.sort_by(f64::total_cmp);
        powers.dedup();
        if powers.len() < MIN_DISTINCT_POWERS {
            return Err(PhotometryError::InsufficientData {
                found: powers.len(),
                needed: MIN_DISTINCT_POWERS,
            });
        }
        Ok(())
    }
}

pub fn saturation_model(power_mw: f64, f_sat: f64, p_sat: f64, slope: f64) -> f64 {
    f_sat / (1.0 + p_sat / power_mw) + slope * power_mw
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaturationFit {
    pub f_sat: f64,
    pub p_sat: f64,
    pub background_slope: f64,
    pub f_sat_sigma: f64,
    pub p_sat_sigma: f64,
    pub background_slope_sigma: f64,
    /// Square root of the (weighted) residual sum of squares.
    pub residual_norm: f64,
    pub iterations: usize,
    pub slope_fixed: bool,
}

impl SaturationFit {
    pub fn evaluate(&self, power_mw: f64) -> f64 {
        saturation_model(power_mw, self.f_sat, self.p_sat, self.background_slope)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SaturationFitOptions {
    /// Hold the background slope at this value instead of fitting it.
    pub fixed_slope: Option<f64>,
    pub max_iterations: usize,
    pub relative_tolerance: f64,
}

impl Default for SaturationFitOptions {
    fn default() -> Self {
        Self {
            fixed_slope: None,
            max_iterations: 500,
            relative_tolerance: 1e-8,
        }
    }
}

pub fn fit_saturation(data: &SaturationDataset) -> Result<SaturationFit, PhotometryError> {
    fit_saturation_with(data, &SaturationFitOptions::default())
}

struct Problem {
    p: Vec<f64>,
    f: Vec<f64>,
    w: Vec<f64>,
}

impl Problem {
    fn p_max(&self) -> f64 {
        self.p.iter().copied().fold(0.0, f64::max)
    }

    fn sse(&self, x: &Vector3<f64>) -> f64 {
        self.p
            .iter()
            .zip(&self.f)
            .zip(&self.w)
            .map(|((&p, &f), &w)| w * (saturation_model(p, x[0], x[1], x[2]) - f).powi(2))
            .sum()
    }

    /// Weighted normal matrix JᵀWJ and gradient JᵀW·r for residual r = model − data.
    fn normal(&self, x: &Vector3<f64>, free: usize) -> (Matrix3<f64>, Vector3<f64>) {
        let mut jtj = Matrix3::zeros();
        let mut jtr = Vector3::zeros();
        for ((&p, &f), &w) in self.p.iter().zip(&self.f).zip(&self.w) {
            let denom = 1.0 + x[1] / p;
            let j = Vector3::new(1.0 / denom, -x[0] / (p * denom * denom), p);
            let j = if free == 2 { Vector3::new(j[0], j[1], 0.0) } else { j };
            let r = saturation_model(p, x[0], x[1], x[2]) - f;
            jtj += j * j.transpose() * w;
            jtr += j * (w * r);
        }
        (jtj, jtr)
    }
}

/// Starting point: scan `P_sat` on a log grid and solve the linear
/// subproblem for `F_sat` and the slope at each grid value.
fn initial_guess(pr: &Problem, fixed_slope: Option<f64>) -> Vector3<f64> {
    let pmin = pr.p.iter().copied().fold(f64::INFINITY, f64::min);
    let pmax = pr.p.iter().copied().fold(0.0, f64::max);
    let (lo, hi) = ((pmin / 100.0).ln(), (pmax * 100.0).ln());
    let mut best = (f64::INFINITY, Vector3::new(1.0, pmin, 0.0));
    for i in 0..=200 {
        let p_sat = (lo + (hi - lo) * i as f64 / 200.0).exp();
        let x = match fixed_slope {
            Some(c) => {
                let (mut a, mut b) = (0.0, 0.0);
                for ((&p, &f), &w) in pr.p.iter().zip(&pr.f).zip(&pr.w) {
                    let g = 1.0 / (1.0 + p_sat / p);
                    a += w * g * g;
                    b += w * g * (f - c * p);
                }
                Vector3::new((b / a).max(f64::MIN_POSITIVE), p_sat, c)
            }
            None => {
                let mut m = Matrix2::zeros();
                let mut v = Vector2::zeros();
                for ((&p, &f), &w) in pr.p.iter().zip(&pr.f).zip(&pr.w) {
                    let g = Vector2::new(1.0 / (1.0 + p_sat / p), p);
                    m += g * g.transpose() * w;
                    v += g * (w * f);
                }
                match m.lu().solve(&v) {
                    Some(s) if s[1] >= 0.0 => Vector3::new(s[0].max(f64::MIN_POSITIVE), p_sat, s[1]),
                    _ => {
                        let (a, b) = pr.p.iter().zip(&pr.f).zip(&pr.w).fold((0.0, 0.0), |(a, b), ((&p, &f), &w)| {
                            let g = 1.0 / (1.0 + p_sat / p);
                            (a + w * g * g, b + w * g * f)
                        });
                        Vector3::new((b / a).max(f64::MIN_POSITIVE), p_sat, 0.0)
                    }
                }
            }
        };
        let sse = pr.sse(&x);
        if sse < best.0 {
            best = (sse, x);
        }
    }
    best.1
}

fn project(x: Vector3<f64>, fixed_slope: Option<f64>) -> Vector3<f64> {
    let tiny = 1e-300;
    Vector3::new(
        x[0].max(tiny),
        x[1].max(tiny),
        fixed_slope.unwrap_or(x[2].max(0.0)),
    )
}

/// Levenberg–Marquardt on the saturation model with `F_sat, P_sat > 0` and
/// slope `>= 0` enforced by projection. Points with `sigma_cps` are weighted
/// by inverse variance; otherwise all points weigh equally.
pub fn fit_saturation_with(
    data: &SaturationDataset,
    opts: &SaturationFitOptions,
) -> Result<SaturationFit, PhotometryError> {
    data.validate()?;
    if let Some(c) = opts.fixed_slope {
        if !(c >= 0.0) || !c.is_finite() {
            return Err(PhotometryError::InvalidInput(format!("fixed slope {c} must be >= 0")));
        }
    }
    let weighted = data.points.iter().all(|p| p.sigma_cps.is_some());
    let pr = Problem {
        p: data.points.iter().map(|p| p.power_mw).collect(),
        f: data.points.iter().map(|p| p.counts_per_s).collect(),
        w: data
            .points
            .iter()
            .map(|p| match (weighted, p.sigma_cps) {
                (true, Some(s)) => 1.0 / (s * s),
                _ => 1.0,
            })
            .collect(),
    };
    let free = if opts.fixed_slope.is_some() { 2 } else { 3 };

    let mut x = project(initial_guess(&pr, opts.fixed_slope), opts.fixed_slope);
    let mut sse = pr.sse(&x);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iterations {
        iterations += 1;
        let (jtj, jtr) = pr.normal(&x, free);
        let mut stepped = false;
        for _ in 0..60 {
            let mut a = jtj;
            for i in 0..3 {
                a[(i, i)] += lambda * jtj[(i, i)].max(1e-300);
            }
            if free == 2 {
                a[(2, 2)] = 1.0;
            }
            let Some(delta) = a.lu().solve(&(-jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let trial = project(x + delta, opts.fixed_slope);
            let trial_sse = pr.sse(&trial);
            if trial_sse <= sse {
                // The slope may sit on its zero bound, so it is measured
                // against the natural scale F_sat / P_max.
                let scales = [x[0].abs(), x[1].abs(), x[0].abs() / pr.p_max()];
                let change = (0..free)
                    .map(|i| ((trial[i] - x[i]) / scales[i].max(1e-300)).abs())
                    .fold(0.0, f64::max);
                x = trial;
                sse = trial_sse;
                lambda = (lambda / 10.0).max(1e-15);
                stepped = true;
                if change < opts.relative_tolerance {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if converged {
            break;
        }
        if !stepped {
            // No downhill step at any damping: the iterate is a minimum to
            // working precision.
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(PhotometryError::NoConvergence {
            iterations,
            f_sat: x[0],
            p_sat: x[1],
            slope: x[2],
        });
    }

    let (jtj, _) = pr.normal(&x, free);
    let n = pr.p.len();
    let dof = n.saturating_sub(free).max(1) as f64;
    let scale = sse / dof;
    let sigmas = if free == 3 {
        jtj.try_inverse().map(|c| Vector3::from_fn(|i, _| (c[(i, i)] * scale).max(0.0).sqrt()))
    } else {
        let m = Matrix2::new(jtj[(0, 0)], jtj[(0, 1)], jtj[(1, 0)], jtj[(1, 1)]);
        m.try_inverse()
            .map(|c| Vector3::new((c[(0, 0)] * scale).max(0.0).sqrt(), (c[(1, 1)] * scale).max(0.0).sqrt(), 0.0))
    }
    .unwrap_or(Vector3::from_element(f64::INFINITY));

    Ok(SaturationFit {
        f_sat: x[0],
        p_sat: x[1],
        background_slope: x[2],
        f_sat_sigma: sigmas[0],
        p_sat_sigma: sigmas[1],
        background_slope_sigma: sigmas[2],
        residual_norm: sse.sqrt(),
        iterations,
        slope_fixed: free == 2,
    })
}

/// The two background corrections side by side: the linear term of the
/// saturation model, and scaling the data by the single-photon purity
/// derived from `g²(0)` with the slope held at zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackgroundComparison {
    pub linear_term: SaturationFit,
    pub purity_scaled: SaturationFit,
    pub purity: f64,
    /// True when the linear-term path yields the larger `F_sat`.
    pub linear_term_higher: bool,
}

pub fn compare_background_paths(
    data: &SaturationDataset,
    g2_zero: f64,
) -> Result<BackgroundComparison, PhotometryError> {
    let linear_term = fit_saturation(data)?;
    let purity = super::g2::g2_decompose(g2_zero, 1.0)?.purity;
    let scaled = SaturationDataset {
        points: data
            .points
            .iter()
            .map(|p| SaturationPoint {
                power_mw: p.power_mw,
                counts_per_s: p.counts_per_s * purity,
                sigma_cps: p.sigma_cps.map(|s| s * purity),
            })
            .collect(),
        ..data.clone()
    };
    let purity_scaled = fit_saturation_with(
        &scaled,
        &SaturationFitOptions {
            fixed_slope: Some(0.0),
            ..SaturationFitOptions::default()
        },
    )?;
    Ok(BackgroundComparison {
        linear_term,
        purity_scaled,
        purity,
        linear_term_higher: linear_term.f_sat >= purity_scaled.f_sat,
    })
}
