//! Coincidence histograms, `g²(0)` estimation, and the signal/background
//! decomposition `g²(0) = 1 − S²/(S+B)²`.

use serde::{Deserialize, Serialize};

use super::PhotometryError;

pub const MIN_SIDE_PEAKS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalBackground {
    pub signal: f64,
    pub background: f64,
    pub purity: f64,
}

/// Splits a total rate into signal and background from `g²(0)`.
pub fn g2_decompose(g2_zero: f64, total_rate: f64) -> Result<SignalBackground, PhotometryError> {
    if !(total_rate > 0.0) || !total_rate.is_finite() {
        return Err(PhotometryError::InvalidInput(format!("total rate {total_rate} must be > 0")));
    }
    if !(g2_zero >= 0.0) {
        return Err(PhotometryError::InvalidInput(format!("g2(0) = {g2_zero} must be >= 0")));
    }
    if g2_zero >= 1.0 {
        return Err(PhotometryError::NoSingleEmitter { g2_zero });
    }
    let purity = (1.0 - g2_zero).sqrt();
    Ok(SignalBackground {
        signal: purity * total_rate,
        background: (1.0 - purity) * total_rate,
        purity,
    })
}

/// `g²(0)` implied by signal and background rates.
pub fn g2_from_rates(signal: f64, background: f64) -> f64 {
    let total = signal + background;
    1.0 - (signal * signal) / (total * total)
}

/// Delay histogram of detector-B clicks relative to detector-A clicks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceHistogram {
    pub bin_width_s: f64,
    /// Bin centres, ascending and symmetric about zero.
    pub delays_s: Vec<f64>,
    pub counts: Vec<u64>,
    pub repetition_period_s: f64,
    pub acquisition_time_s: f64,
}

#[derive(Debug, Deserialize)]
struct CsvRow {
    delay_ns: f64,
    counts: f64,
}

impl CoincidenceHistogram {
    /// Empty histogram with odd bin count centred on zero delay, covering
    /// at least `half_range_s` on each side.
    pub fn empty(bin_width_s: f64, half_range_s: f64, repetition_period_s: f64) -> Self {
        let m = (half_range_s / bin_width_s).ceil() as i64;
        let delays_s = (-m..=m).map(|j| j as f64 * bin_width_s).collect();
        Self {
            bin_width_s,
            delays_s,
            counts: vec![0; (2 * m + 1) as usize],
            repetition_period_s,
            acquisition_time_s: 0.0,
        }
    }

    /// Adds one coincidence at `delay_s`; delays outside the range are ignored.
    pub fn record(&mut self, delay_s: f64) {
        let m = (self.counts.len() / 2) as i64;
        let j = (delay_s / self.bin_width_s).round() as i64;
        if j.abs() <= m {
            self.counts[(j + m) as usize] += 1;
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Largest `|delay|` covered by the bins.
    pub fn half_range_s(&self) -> f64 {
        self.delays_s.last().copied().unwrap_or(0.0) + 0.5 * self.bin_width_s
    }

    pub fn validate(&self) -> Result<(), PhotometryError> {
        if self.delays_s.len() != self.counts.len() || self.delays_s.len() < 2 {
            return Err(PhotometryError::InvalidInput("histogram needs matching delays and counts".into()));
        }
        if !(self.bin_width_s > 0.0) || !(self.repetition_period_s > 0.0) {
            return Err(PhotometryError::InvalidInput(
                "bin width and repetition period must be positive".into(),
            ));
        }
        if self.delays_s.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(PhotometryError::InvalidInput("delays must be ascending".into()));
        }
        Ok(())
    }

    /// Reads `delay_ns, counts` rows. Bin width is taken from the first two rows.
    pub fn read_csv<R: std::io::Read>(reader: R, repetition_period_s: f64) -> Result<Self, PhotometryError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut delays_s = Vec::new();
        let mut counts = Vec::new();
        for row in rdr.deserialize() {
            let row: CsvRow = row?;
            if !(row.counts >= 0.0) || row.counts.fract() != 0.0 {
                return Err(PhotometryError::InvalidInput(format!(
                    "count {} is not a nonnegative integer",
                    row.counts
                )));
            }
            delays_s.push(row.delay_ns * 1e-9);
            counts.push(row.counts as u64);
        }
        if delays_s.len() < 2 {
            return Err(PhotometryError::InvalidInput("histogram needs at least two bins".into()));
        }
        let h = Self {
            bin_width_s: delays_s[1] - delays_s[0],
            delays_s,
            counts,
            repetition_period_s,
            acquisition_time_s: 0.0,
        };
        h.validate()?;
        Ok(h)
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<(), PhotometryError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["delay_ns", "counts"])?;
        for (d, c) in self.delays_s.iter().zip(&self.counts) {
            w.write_record([format!("{:.8e}", d * 1e9), c.to_string()])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Peak areas integrated over `[kT − T/2, kT + T/2)` for every `k` whose
    /// window lies fully inside the histogram, keyed by `k`.
    pub fn peak_areas(&self) -> Vec<(i64, u64)> {
        let t = self.repetition_period_s;
        let reach = self.half_range_s();
        let k_max = ((reach - 0.5 * t) / t + 1e-9).floor() as i64;
        (-k_max..=k_max)
            .map(|k| {
                let lo = (k as f64 - 0.5) * t;
                let hi = (k as f64 + 0.5) * t;
                let area = self
                    .delays_s
                    .iter()
                    .zip(&self.counts)
                    .filter(|(&d, _)| d >= lo && d < hi)
                    .map(|(_, &c)| c)
                    .sum();
                (k, area)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct G2Result {
    pub g2_zero: f64,
    pub g2_sigma: f64,
    pub zero_peak_area: u64,
    pub side_peak_areas: Vec<u64>,
    pub mean_side_area: f64,
    /// `√(1 − g²(0))`, clamped to zero when `g²(0) ≥ 1`.
    pub purity: f64,
}

/// `g²(0)` as the zero-delay peak area over the mean side-peak area, with
/// Poisson errors on both propagated.
pub fn g2_from_histogram(h: &CoincidenceHistogram) -> Result<G2Result, PhotometryError> {
    h.validate()?;
    let peaks = h.peak_areas();
    let zero = peaks.iter().find(|(k, _)| *k == 0).map(|p| p.1).unwrap_or(0);
    let side: Vec<u64> = peaks.iter().filter(|(k, _)| *k != 0).map(|p| p.1).collect();
    if side.len() < MIN_SIDE_PEAKS {
        return Err(PhotometryError::Normalization(format!(
            "{} side peaks in range, at least {MIN_SIDE_PEAKS} required",
            side.len()
        )));
    }
    let n = side.len() as f64;
    let mean = side.iter().sum::<u64>() as f64 / n;
    if mean <= 0.0 {
        return Err(PhotometryError::Normalization("side peaks are empty".into()));
    }
    let a0 = zero as f64;
    let g2 = a0 / mean;
    let sigma = (a0 / (mean * mean) + g2 * g2 / (n * mean)).sqrt();
    Ok(G2Result {
        g2_zero: g2,
        g2_sigma: sigma,
        zero_peak_area: zero,
        side_peak_areas: side,
        mean_side_area: mean,
        purity: (1.0 - g2).max(0.0).sqrt(),
    })
}
