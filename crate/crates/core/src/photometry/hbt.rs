//! Monte Carlo photon streams behind a beamsplitter for a pulsed
//! single-photon emitter with Poissonian background.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Geometric};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::g2::CoincidenceHistogram;
use super::PhotometryError;

/// Pulses simulated per random stream.
const CHUNK_PULSES: u64 = 1 << 18;
pub const MIN_EXPECTED_COINCIDENCES: f64 = 1e4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmitterModel {
    /// Probability that a pulse yields one detected signal photon.
    pub emission_probability: f64,
    pub background_rate_cps: f64,
    pub radiative_lifetime_s: f64,
    pub repetition_rate_hz: f64,
    /// Fraction of photons routed to detector A.
    #[serde(default = "half")]
    pub split_ratio: f64,
    pub seed: u64,
}

fn half() -> f64 {
    0.5
}

impl EmitterModel {
    /// Model with the given signal purity `S/(S+B)` at detected signal
    /// probability `emission_probability` per pulse.
    pub fn with_purity(
        emission_probability: f64,
        purity: f64,
        radiative_lifetime_s: f64,
        repetition_rate_hz: f64,
        seed: u64,
    ) -> Self {
        let signal = emission_probability * repetition_rate_hz;
        Self {
            emission_probability,
            background_rate_cps: signal * (1.0 - purity) / purity,
            radiative_lifetime_s,
            repetition_rate_hz,
            split_ratio: 0.5,
            seed,
        }
    }

    pub fn purity(&self) -> f64 {
        let s = self.emission_probability * self.repetition_rate_hz;
        s / (s + self.background_rate_cps)
    }

    pub fn validate(&self) -> Result<(), PhotometryError> {
        let prob = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(PhotometryError::InvalidInput(format!("{name} = {v} outside [0, 1]")))
            }
        };
        prob("emission_probability", self.emission_probability)?;
        prob("split_ratio", self.split_ratio)?;
        if !(self.background_rate_cps >= 0.0) || !self.background_rate_cps.is_finite() {
            return Err(PhotometryError::InvalidInput("background rate must be >= 0".into()));
        }
        if !(self.radiative_lifetime_s > 0.0) || !(self.repetition_rate_hz > 0.0) {
            return Err(PhotometryError::InvalidInput(
                "lifetime and repetition rate must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Expected coincidences in one side peak over `duration_s`.
    pub fn expected_side_peak_area(&self, duration_s: f64) -> f64 {
        let per_pulse = self.emission_probability + self.background_rate_cps / self.repetition_rate_hz;
        let pulses = duration_s * self.repetition_rate_hz;
        pulses * per_pulse * per_pulse * self.split_ratio * (1.0 - self.split_ratio)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HbtOptions {
    /// Requested bin width; adjusted so an odd number of bins spans a period.
    pub bin_width_s: f64,
    /// Side peaks recorded on each side of zero delay.
    pub side_peaks: usize,
}

impl Default for HbtOptions {
    fn default() -> Self {
        Self {
            bin_width_s: 0.5e-9,
            side_peaks: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HbtRun {
    pub clicks_a: Vec<f64>,
    pub clicks_b: Vec<f64>,
    pub histogram: CoincidenceHistogram,
    pub expected_coincidences: f64,
    pub warnings: Vec<String>,
}

pub fn simulate_hbt(model: &EmitterModel, duration_s: f64) -> Result<HbtRun, PhotometryError> {
    simulate_hbt_with(model, duration_s, &HbtOptions::default())
}

fn chunk_clicks(model: &EmitterModel, period: f64, first: u64, last: u64, chunk: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
    rng.set_stream(chunk);
    let mut a = Vec::new();
    let mut b = Vec::new();
    let mut route = |rng: &mut ChaCha8Rng, t: f64| {
        if rng.gen::<f64>() < model.split_ratio {
            a.push(t);
        } else {
            b.push(t);
        }
    };

    if model.emission_probability > 0.0 {
        let delay = Exp::new(1.0 / model.radiative_lifetime_s).expect("positive lifetime");
        if model.emission_probability >= 1.0 {
            for i in first..last {
                let t = i as f64 * period + delay.sample(&mut rng);
                route(&mut rng, t);
            }
        } else {
            let gaps = Geometric::new(model.emission_probability).expect("probability in (0, 1)");
            let mut i = first + gaps.sample(&mut rng);
            while i < last {
                let t = i as f64 * period + delay.sample(&mut rng);
                route(&mut rng, t);
                i = i.saturating_add(1 + gaps.sample(&mut rng));
            }
        }
    }

    if model.background_rate_cps > 0.0 {
        let gaps = Exp::new(model.background_rate_cps).expect("positive rate");
        let end = last as f64 * period;
        let mut t = first as f64 * period + gaps.sample(&mut rng);
        while t < end {
            route(&mut rng, t);
            t += gaps.sample(&mut rng);
        }
    }
    (a, b)
}

/// Simulates `duration_s` of pulsed excitation and histograms the delays
/// `t_B − t_A` of all click pairs within the recorded range.
pub fn simulate_hbt_with(
    model: &EmitterModel,
    duration_s: f64,
    opts: &HbtOptions,
) -> Result<HbtRun, PhotometryError> {
    model.validate()?;
    if !(duration_s > 0.0) || !duration_s.is_finite() {
        return Err(PhotometryError::InvalidInput(format!("duration {duration_s} s must be > 0")));
    }
    if !(opts.bin_width_s > 0.0) || opts.side_peaks < 1 {
        return Err(PhotometryError::InvalidInput(
            "bin width must be positive and at least one side peak recorded".into(),
        ));
    }
    let period = 1.0 / model.repetition_rate_hz;
    let pulses = (duration_s * model.repetition_rate_hz).floor() as u64;
    let n_chunks = pulses.div_ceil(CHUNK_PULSES);

    let chunks: Vec<(Vec<f64>, Vec<f64>)> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let first = c * CHUNK_PULSES;
            let last = (first + CHUNK_PULSES).min(pulses);
            chunk_clicks(model, period, first, last, c)
        })
        .collect();
    let mut clicks_a: Vec<f64> = chunks.iter().flat_map(|c| c.0.iter().copied()).collect();
    let mut clicks_b: Vec<f64> = chunks.iter().flat_map(|c| c.1.iter().copied()).collect();
    clicks_a.sort_by(f64::total_cmp);
    clicks_b.sort_by(f64::total_cmp);

    let per_period = {
        let n = (period / opts.bin_width_s).round().max(1.0) as u64;
        if n.is_multiple_of(2) {
            n + 1
        } else {
            n
        }
    };
    let width = period / per_period as f64;
    let half_range = (opts.side_peaks as f64 + 0.5) * period - 0.5 * width;
    let mut histogram = CoincidenceHistogram::empty(width, half_range, period);
    histogram.acquisition_time_s = pulses as f64 * period;
    let reach = histogram.half_range_s();

    let mut start = 0;
    for &ta in &clicks_a {
        while start < clicks_b.len() && clicks_b[start] < ta - reach {
            start += 1;
        }
        for &tb in &clicks_b[start..] {
            let d = tb - ta;
            if d >= reach {
                break;
            }
            histogram.record(d);
        }
    }

    let expected = model.expected_side_peak_area(pulses as f64 * period) * (2 * opts.side_peaks) as f64;
    let mut warnings = Vec::new();
    if expected < MIN_EXPECTED_COINCIDENCES {
        warnings.push(format!(
            "only {expected:.0} side-peak coincidences expected; at least {MIN_EXPECTED_COINCIDENCES:.0} recommended"
        ));
    }
    Ok(HbtRun {
        clicks_a,
        clicks_b,
        histogram,
        expected_coincidences: expected,
        warnings,
    })
}
