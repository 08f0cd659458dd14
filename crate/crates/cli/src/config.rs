//! Run configuration: one TOML document with a global block and one table
//! per engine. Presets are TOML documents shipped with the binary; a config
//! file given alongside a preset overrides it key by key.

use std::path::{Path, PathBuf};

use reflector_core::fabsim::EtchStack;
use reflector_core::fdtd::SimulationConfig;
use reflector_core::geo_optics::{DipoleSource, ParaboloidDevice, TraceOptions};
use reflector_core::photometry::{HbtOptions, DETECTOR_EFFICIENCY, SETUP_TRANSMISSION};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const PRESETS: &[(&str, &str)] = &[
    ("unpatterned", include_str!("../presets/unpatterned.toml")),
    ("fig1b", include_str!("../presets/fig1b.toml")),
    ("fig1f", include_str!("../presets/fig1f.toml")),
    ("fig1g", include_str!("../presets/fig1g.toml")),
    ("fig1h", include_str!("../presets/fig1h.toml")),
    ("fig2", include_str!("../presets/fig2.toml")),
    ("fig3d", include_str!("../presets/fig3d.toml")),
    ("fig3e", include_str!("../presets/fig3e.toml")),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Threads {
    Count(usize),
    Auto(AutoThreads),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoThreads {
    Auto,
}

impl Default for Threads {
    fn default() -> Self {
        Threads::Auto(AutoThreads::Auto)
    }
}

impl std::str::FromStr for Threads {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if s == "auto" {
            return Ok(Self::default());
        }
        match s.parse::<usize>() {
            Ok(n) if n > 0 => Ok(Threads::Count(n)),
            _ => Err(format!("expected a positive integer or `auto`, got `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub threads: Threads,
    pub geo: GeoSection,
    pub fdtd: FdtdSection,
    pub fabsim: FabSection,
    pub saturation: SaturationSection,
    pub g2: G2Section,
    pub hbt: HbtSection,
    pub lifetime: LifetimeSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeoSection {
    pub device: ParaboloidDevice,
    pub source: DipoleSource,
    pub apertures: Vec<f64>,
    pub rays: usize,
    pub histogram_bins: usize,
    pub trace: TraceOptions,
}

impl Default for GeoSection {
    fn default() -> Self {
        Self {
            device: ParaboloidDevice::default(),
            source: DipoleSource::perpendicular(),
            apertures: vec![0.5, 1.3],
            rays: 1_000_000,
            histogram_bins: 90,
            trace: TraceOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    Vertical,
    Lateral,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub offsets_nm: Vec<f64>,
}

impl SweepSpec {
    /// Parses `start:stop:step` (inclusive of `stop` when it lands on the grid).
    pub fn parse(axis: &str, range: &str) -> Result<Self, CliError> {
        let axis = match axis {
            "vertical" => SweepAxis::Vertical,
            "lateral" => SweepAxis::Lateral,
            other => return Err(CliError::Validation(format!("sweep axis `{other}` is not vertical or lateral"))),
        };
        let parts: Vec<f64> = range
            .split(':')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| CliError::Validation(format!("sweep range `{range}` is not start:stop:step")))?;
        let [start, stop, step] = parts[..] else {
            return Err(CliError::Validation(format!("sweep range `{range}` is not start:stop:step")));
        };
        if !(step > 0.0) || !(stop >= start) {
            return Err(CliError::Validation(format!("sweep range `{range}` needs step > 0 and stop >= start")));
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        Ok(Self {
            axis,
            offsets_nm: (0..count).map(|i| start + i as f64 * step).collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FdtdSection {
    pub simulation: SimulationConfig,
    pub apertures: Vec<f64>,
    pub sweep: Option<SweepSpec>,
}

impl Default for FdtdSection {
    fn default() -> Self {
        Self {
            simulation: SimulationConfig::default(),
            apertures: vec![0.5, 1.3],
            sweep: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FabSection {
    pub stack: EtchStack,
    pub disk_radius_nm: f64,
    pub target_depth_um: f64,
    pub grid_step_nm: f64,
    /// Measured profile (`r_nm, z_nm`) to fit instead of running the process.
    pub input: Option<PathBuf>,
    pub fit_window_nm: Option<[f64; 2]>,
}

impl Default for FabSection {
    fn default() -> Self {
        Self {
            stack: EtchStack::default(),
            disk_radius_nm: 2500.0,
            target_depth_um: 5.0,
            grid_step_nm: 1.0,
            input: None,
            fit_window_nm: None,
        }
    }
}

/// Noiseless saturation curve sampled at the given powers, used when no
/// measured data file is supplied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSaturation {
    pub f_sat_cps: f64,
    pub p_sat_mw: f64,
    #[serde(default)]
    pub slope_cps_per_mw: f64,
    pub powers_mw: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SaturationSection {
    /// `P_mW, F_cps[, sigma_cps]` data file.
    pub input: Option<PathBuf>,
    pub synthetic: Option<SyntheticSaturation>,
    pub repetition_rate_hz: f64,
    pub pulse_length_s: f64,
    /// Zero-delay correlation used by the purity-scaling background path.
    pub g2_zero: f64,
    pub eta_detector: f64,
    pub eta_transmission: f64,
    /// Excitation probability per pulse at saturation.
    pub sigma: f64,
}

impl Default for SaturationSection {
    fn default() -> Self {
        Self {
            input: None,
            synthetic: None,
            repetition_rate_hz: 4.88e6,
            pulse_length_s: 1e-11,
            g2_zero: 0.1873,
            eta_detector: DETECTOR_EFFICIENCY,
            eta_transmission: SETUP_TRANSMISSION,
            sigma: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct G2Section {
    /// `delay_ns, counts` histogram file.
    pub input: Option<PathBuf>,
    pub repetition_rate_hz: f64,
    /// Total detected rate, to split into signal and background.
    pub total_rate_cps: Option<f64>,
}

impl Default for G2Section {
    fn default() -> Self {
        Self {
            input: None,
            repetition_rate_hz: 4.88e6,
            total_rate_cps: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HbtSection {
    pub emission_probability: f64,
    pub purity: f64,
    pub radiative_lifetime_s: f64,
    pub repetition_rate_hz: f64,
    pub split_ratio: f64,
    pub duration_s: f64,
    pub histogram: HbtOptions,
}

impl Default for HbtSection {
    fn default() -> Self {
        Self {
            emission_probability: 0.12,
            purity: 0.9015,
            radiative_lifetime_s: 12.67e-9,
            repetition_rate_hz: 4.88e6,
            split_ratio: 0.5,
            duration_s: 1.0,
            histogram: HbtOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LifetimeSection {
    /// `delay_ns, counts` histogram file; without one, the `hbt` table is simulated.
    pub input: Option<PathBuf>,
    pub repetition_rate_hz: f64,
}

impl Default for LifetimeSection {
    fn default() -> Self {
        Self {
            input: None,
            repetition_rate_hz: 4.88e6,
        }
    }
}

pub fn preset(name: &str) -> Result<&'static str, CliError> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| *text)
        .ok_or_else(|| {
            let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
            CliError::Validation(format!("unknown preset `{name}`; available: {}", names.join(", ")))
        })
}

fn parse_table(text: &str, origin: &str) -> Result<toml::Table, CliError> {
    text.parse::<toml::Table>()
        .map_err(|e| CliError::Validation(format!("{origin}: {e}")))
}

/// Recursively overlays `top` on `base`; tables merge, everything else replaces.
fn merge(base: &mut toml::Table, top: toml::Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Preset, then config file, deserialized and checked against the schema.
pub fn load(preset_name: Option<&str>, config_path: Option<&Path>) -> Result<RunConfig, CliError> {
    let mut table = toml::Table::new();
    if let Some(name) = preset_name {
        merge(&mut table, parse_table(preset(name)?, &format!("preset {name}"))?);
    }
    if let Some(path) = config_path {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        merge(&mut table, parse_table(&text, &path.display().to_string())?);
    }
    RunConfig::deserialize(toml::Value::Table(table))
        .map_err(|e| CliError::Validation(format!("config: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_parses() {
        for (name, _) in PRESETS {
            load(Some(name), None).unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = RunConfig::deserialize(toml::Value::Table(parse_table("[geo]\nrayz = 5", "t").unwrap())).unwrap_err();
        assert!(err.to_string().contains("rayz"), "{err}");
    }

    #[test]
    fn overlay_keeps_sibling_keys() {
        let mut base = parse_table("[geo]\nrays = 5\nhistogram_bins = 3", "a").unwrap();
        merge(&mut base, parse_table("[geo]\nrays = 7", "b").unwrap());
        let c = RunConfig::deserialize(toml::Value::Table(base)).unwrap();
        assert_eq!((c.geo.rays, c.geo.histogram_bins), (7, 3));
    }

    #[test]
    fn sweep_ranges() {
        let s = SweepSpec::parse("vertical", "0:200:50").unwrap();
        assert_eq!(s.offsets_nm, vec![0.0, 50.0, 100.0, 150.0, 200.0]);
        assert!(SweepSpec::parse("sideways", "0:1:1").is_err());
        assert!(SweepSpec::parse("lateral", "0:200").is_err());
        assert!(SweepSpec::parse("lateral", "0:200:0").is_err());
    }

    #[test]
    fn threads_accept_auto_and_counts() {
        assert_eq!("auto".parse::<Threads>().unwrap(), Threads::default());
        assert_eq!("3".parse::<Threads>().unwrap(), Threads::Count(3));
        assert!("0".parse::<Threads>().is_err());
        let c: RunConfig = toml::from_str("threads = 2").unwrap();
        assert_eq!(c.threads, Threads::Count(2));
        let c: RunConfig = toml::from_str("threads = \"auto\"").unwrap();
        assert_eq!(c.threads, Threads::default());
    }
}
