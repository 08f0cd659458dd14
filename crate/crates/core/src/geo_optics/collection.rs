//! Monte Carlo collection efficiency and angular distribution.
//!
//! Rays are traced in fixed-size batches. Each ray draws from its own
//! counter-indexed random stream and batch tallies are merged in batch order,
//! so results are bit-identical for any thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::device::ParaboloidDevice;
use super::source::{sample_ray, DipoleFrame, DipoleSource};
use super::trace::{trace_into, ExitRecord, ExitSurface, TraceOptions, TraceOutcome};
use super::GeoError;

const BATCH: usize = 4096;
pub const MIN_RAYS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollectionEstimate {
    pub numerical_aperture: f64,
    pub eta: f64,
    pub standard_error: f64,
}

/// Weight fractions by exit channel, summed over all rays.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ExitBudget {
    pub top_facet: f64,
    pub paraboloid_wall: f64,
    pub bottom_facet: f64,
    pub lost_max_bounce: f64,
    pub residual: f64,
}

impl ExitBudget {
    pub fn total(&self) -> f64 {
        self.top_facet + self.paraboloid_wall + self.bottom_facet + self.lost_max_bounce + self.residual
    }

    fn merge(&mut self, o: &ExitBudget) {
        self.top_facet += o.top_facet;
        self.paraboloid_wall += o.paraboloid_wall;
        self.bottom_facet += o.bottom_facet;
        self.lost_max_bounce += o.lost_max_bounce;
        self.residual += o.residual;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngularHistogram {
    /// Collection half-angle bin edges in degrees, ascending from 0 to 90.
    pub bin_edges_theta: Vec<f64>,
    pub power_per_bin: Vec<f64>,
    /// Index of the medium in which the angles are measured.
    pub reference_medium: f64,
}

impl AngularHistogram {
    pub fn new(bins: usize, reference_medium: f64) -> Self {
        let edges = (0..=bins).map(|i| 90.0 * i as f64 / bins as f64).collect();
        Self {
            bin_edges_theta: edges,
            power_per_bin: vec![0.0; bins],
            reference_medium,
        }
    }

    /// Adds power leaving with numerical aperture `na`. Rays that cannot
    /// propagate in the reference medium are not binned.
    pub fn add(&mut self, na: f64, power: f64) {
        if na > self.reference_medium {
            return;
        }
        let theta = (na / self.reference_medium).clamp(0.0, 1.0).asin().to_degrees();
        let bins = self.power_per_bin.len();
        let idx = ((theta / 90.0) * bins as f64) as usize;
        self.power_per_bin[idx.min(bins - 1)] += power;
    }

    pub fn cumulative(&self) -> Vec<f64> {
        self.power_per_bin
            .iter()
            .scan(0.0, |acc, p| {
                *acc += p;
                Some(*acc)
            })
            .collect()
    }

    pub fn total(&self) -> f64 {
        self.power_per_bin.iter().sum()
    }

    /// Cumulative power up to the half-angle `theta_deg`, using bins whose
    /// upper edge does not exceed it.
    pub fn cumulative_at(&self, theta_deg: f64) -> f64 {
        self.power_per_bin
            .iter()
            .zip(&self.bin_edges_theta[1..])
            .take_while(|(_, &edge)| edge <= theta_deg + 1e-9)
            .map(|(p, _)| p)
            .sum()
    }
}

/// Full result of one geometric-optics run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoRun {
    pub ray_count: usize,
    pub estimates: Vec<CollectionEstimate>,
    pub histogram: AngularHistogram,
    pub budget: ExitBudget,
}

#[derive(Debug, Clone)]
struct Tally {
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    hist: AngularHistogram,
    budget: ExitBudget,
}

impl Tally {
    fn new(n_na: usize, bins: usize, n_ref: f64) -> Self {
        Self {
            sum: vec![0.0; n_na],
            sum_sq: vec![0.0; n_na],
            hist: AngularHistogram::new(bins, n_ref),
            budget: ExitBudget::default(),
        }
    }

    fn merge(&mut self, o: &Tally) {
        for (a, b) in self.sum.iter_mut().zip(&o.sum) {
            *a += b;
        }
        for (a, b) in self.sum_sq.iter_mut().zip(&o.sum_sq) {
            *a += b;
        }
        for (a, b) in self.hist.power_per_bin.iter_mut().zip(&o.hist.power_per_bin) {
            *a += b;
        }
        self.budget.merge(&o.budget);
    }
}

/// Geometric-optics run over a list of apertures plus an angular histogram.
#[allow(clippy::too_many_arguments)]
pub fn run_geo(
    device: &ParaboloidDevice,
    source: &DipoleSource,
    apertures: &[f64],
    bins: usize,
    reference_medium: f64,
    ray_count: usize,
    seed: u64,
    opts: &TraceOptions,
) -> Result<GeoRun, GeoError> {
    device.validate()?;
    if ray_count == 0 {
        return Err(GeoError::InvalidArgument("ray count must be at least 1".into()));
    }
    if bins < 2 {
        return Err(GeoError::InvalidArgument(format!("need at least 2 bins, got {bins}")));
    }
    if !(reference_medium > 0.0) {
        return Err(GeoError::InvalidArgument("reference index must be positive".into()));
    }
    for &na in apertures {
        check_aperture(na, device)?;
    }
    if opts.max_bounces < 1 || !(opts.min_weight > 0.0 && opts.min_weight < 1.0) {
        return Err(GeoError::InvalidArgument(
            "max_bounces must be >= 1 and min_weight in (0, 1)".into(),
        ));
    }
    let frame = DipoleFrame::new(source.axis()?);
    let origin = source.absolute_position(device);
    if !device.contains(&origin) {
        return Err(GeoError::OutsideDevice {
            x: origin.x,
            y: origin.y,
            z: origin.z,
        });
    }
    let weight = 1.0 / ray_count as f64;
    let n_batches = ray_count.div_ceil(BATCH);

    let tallies: Vec<Tally> = (0..n_batches)
        .into_par_iter()
        .map(|b| {
            let mut tally = Tally::new(apertures.len(), bins, reference_medium);
            let mut outcome = TraceOutcome::default();
            let start = b * BATCH;
            let end = (start + BATCH).min(ray_count);
            for i in start..end {
                let ray = sample_ray(&frame, origin, device.n_diamond, weight, seed, i as u64);
                outcome.records.clear();
                outcome.residual = 0.0;
                trace_into(&ray, device, opts, &mut outcome);
                tally_ray(&mut tally, &outcome, apertures, weight);
            }
            tally
        })
        .collect();

    let mut total = Tally::new(apertures.len(), bins, reference_medium);
    for t in &tallies {
        total.merge(t);
    }

    let n = ray_count as f64;
    let estimates = apertures
        .iter()
        .enumerate()
        .map(|(k, &na)| {
            let mean = total.sum[k] / n;
            let var = if ray_count > 1 {
                ((total.sum_sq[k] - n * mean * mean) / (n - 1.0)).max(0.0)
            } else {
                0.0
            };
            CollectionEstimate {
                numerical_aperture: na,
                eta: mean,
                standard_error: (var / n).sqrt(),
            }
        })
        .collect();

    Ok(GeoRun {
        ray_count,
        estimates,
        histogram: total.hist,
        budget: total.budget,
    })
}

fn tally_ray(tally: &mut Tally, outcome: &TraceOutcome, apertures: &[f64], weight: f64) {
    tally.budget.residual += outcome.residual;
    for (k, &na) in apertures.iter().enumerate() {
        let collected: f64 = outcome
            .records
            .iter()
            .filter(|r| collected_within(r, na))
            .map(|r| r.power_weight)
            .sum();
        let x = collected / weight;
        tally.sum[k] += x;
        tally.sum_sq[k] += x * x;
    }
    for r in &outcome.records {
        match r.exit_surface {
            ExitSurface::TopFacet => tally.budget.top_facet += r.power_weight,
            ExitSurface::ParaboloidWall => tally.budget.paraboloid_wall += r.power_weight,
            ExitSurface::BottomFacet => {
                tally.budget.bottom_facet += r.power_weight;
                tally.hist.add(r.numerical_aperture, r.power_weight);
            }
            ExitSurface::LostMaxBounce => tally.budget.lost_max_bounce += r.power_weight,
        }
    }
}

#[inline]
fn collected_within(r: &ExitRecord, na: f64) -> bool {
    r.exit_surface == ExitSurface::BottomFacet && r.numerical_aperture <= na
}

fn check_aperture(na: f64, device: &ParaboloidDevice) -> Result<(), GeoError> {
    if !(na > 0.0) || na > device.n_bottom {
        return Err(GeoError::InvalidAperture {
            na,
            n_bottom: device.n_bottom,
        });
    }
    Ok(())
}

/// Fraction of emitted power leaving the bottom facet inside the collection
/// cone of half-angle `asin(NA / n_bottom)`, with its binomial standard error.
pub fn collection_efficiency_geo(
    device: &ParaboloidDevice,
    source: &DipoleSource,
    numerical_aperture: f64,
    ray_count: usize,
    seed: u64,
) -> Result<CollectionEstimate, GeoError> {
    collection_efficiency_with(device, source, numerical_aperture, ray_count, seed, &TraceOptions::default())
}

pub fn collection_efficiency_with(
    device: &ParaboloidDevice,
    source: &DipoleSource,
    numerical_aperture: f64,
    ray_count: usize,
    seed: u64,
    opts: &TraceOptions,
) -> Result<CollectionEstimate, GeoError> {
    check_aperture(numerical_aperture, device)?;
    if ray_count < MIN_RAYS {
        return Err(GeoError::InvalidArgument(format!(
            "at least {MIN_RAYS} rays required, got {ray_count}"
        )));
    }
    let run = run_geo(device, source, &[numerical_aperture], 2, device.n_bottom, ray_count, seed, opts)?;
    Ok(run.estimates[0])
}

/// Collected power binned by collection half-angle in the bottom medium.
pub fn angular_distribution_geo(
    device: &ParaboloidDevice,
    source: &DipoleSource,
    bins: usize,
    ray_count: usize,
    seed: u64,
) -> Result<AngularHistogram, GeoError> {
    let run = run_geo(
        device,
        source,
        &[],
        bins,
        device.n_bottom,
        ray_count,
        seed,
        &TraceOptions::default(),
    )?;
    Ok(run.histogram)
}
