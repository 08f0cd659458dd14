//! One function per subcommand. Each validates its config, computes, and
//! stages its files; `run` writes them together with the manifest.

use std::path::{Path, PathBuf};

use reflector_core::fabsim::{
    default_window, fit_parabola, fit_residuals, process_pipeline_on_grid, RadialProfile,
};
use reflector_core::fdtd::{
    collection_efficiency_fdtd, displacement_sweep, plan_grid, run_dipole_simulation, write_snapshot,
    DisplacementAxis, FdtdError,
};
use reflector_core::geo_optics::{run_geo, GeoError};
use reflector_core::photometry::{
    brightness, compare_background_paths, g2_decompose, g2_from_histogram, lifetime_fit, saturation_model,
    simulate_hbt_with, CoincidenceHistogram, EmitterModel, PhotometryError, SaturationDataset,
    SaturationPoint,
};
use serde::Serialize;

use crate::config::{self, RunConfig, SweepAxis, SweepSpec, Threads};
use crate::output::{config_hash, csv, json, num, RunManifest, Staged};
use crate::{CliError, Command, Common};

const MODEL_CURVE_POINTS: usize = 200;

/// Every ray-tracer error stems from its inputs.
fn geo_error(e: GeoError) -> CliError {
    CliError::Validation(e.to_string())
}

fn fdtd_error(e: FdtdError) -> CliError {
    match e {
        FdtdError::InvalidConfig(_)
        | FdtdError::Oversize { .. }
        | FdtdError::Misplaced(_)
        | FdtdError::InvalidAperture { .. } => CliError::Validation(e.to_string()),
        FdtdError::Diverged { .. } | FdtdError::Snapshot(_) | FdtdError::Io(_) => CliError::Runtime(e.to_string()),
    }
}

fn photometry_error(e: PhotometryError) -> CliError {
    match e {
        PhotometryError::InvalidInput(_) | PhotometryError::InsufficientData { .. } | PhotometryError::Csv(_) => {
            CliError::Validation(e.to_string())
        }
        _ => CliError::Runtime(e.to_string()),
    }
}

fn open_input(path: &Path) -> Result<std::fs::File, CliError> {
    std::fs::File::open(path).map_err(|e| CliError::Validation(format!("cannot open input {}: {e}", path.display())))
}

/// What a command hands back for the manifest.
struct Outcome {
    files: Staged,
    warnings: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Self {
            files: Staged::default(),
            warnings: Vec::new(),
        }
    }
}

fn resolve(common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = config::load(common.preset.as_deref(), common.config.as_deref())?;
    if let Some(s) = common.seed {
        cfg.seed = Some(s);
    }
    if let Some(o) = &common.out {
        cfg.output_dir = Some(o.clone());
    }
    if let Some(t) = common.threads {
        cfg.threads = t;
    }
    Ok(cfg)
}

fn require_seed(cfg: &RunConfig) -> Result<u64, CliError> {
    cfg.seed
        .ok_or_else(|| CliError::Validation("seed is required: pass --seed or set `seed` in the config".into()))
}

fn init_threads(t: Threads) -> Result<(), CliError> {
    if let Threads::Count(n) = t {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    }
    Ok(())
}

pub fn run(command: Command) -> Result<RunManifest, CliError> {
    let started = chrono::Utc::now();
    let (name, common) = match &command {
        Command::SimulateGeo { common, .. } => ("simulate-geo", common),
        Command::SimulateFdtd { common, .. } => ("simulate-fdtd", common),
        Command::Fabsim { common } => ("fabsim", common),
        Command::FitSaturation { common } => ("fit-saturation", common),
        Command::AnalyzeG2 { common } => ("analyze-g2", common),
        Command::SimulateHbt { common } => ("simulate-hbt", common),
        Command::Lifetime { common } => ("lifetime", common),
    };
    let mut cfg = resolve(common)?;
    let input = common.input.clone();
    match &command {
        Command::SimulateGeo { rays: Some(r), .. } => cfg.geo.rays = *r,
        Command::SimulateFdtd { sweep, memory_budget_mb, .. } => {
            if let Some(v) = sweep {
                cfg.fdtd.sweep = Some(SweepSpec::parse(&v[0], &v[1])?);
            }
            if let Some(m) = memory_budget_mb {
                cfg.fdtd.simulation.memory_budget_mb = *m;
            }
        }
        Command::Fabsim { .. } if input.is_some() => cfg.fabsim.input = input,
        Command::FitSaturation { .. } if input.is_some() => cfg.saturation.input = input,
        Command::AnalyzeG2 { .. } if input.is_some() => cfg.g2.input = input,
        Command::Lifetime { .. } if input.is_some() => cfg.lifetime.input = input,
        _ => {}
    }
    init_threads(cfg.threads)?;
    // Where results go and how many threads compute them do not change them.
    let hash = config_hash(&RunConfig {
        output_dir: None,
        threads: Threads::default(),
        ..cfg.clone()
    })?;
    let out_dir = cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("out"));

    let outcome = match command {
        Command::SimulateGeo { .. } => simulate_geo(&cfg)?,
        Command::SimulateFdtd { .. } => simulate_fdtd(&cfg)?,
        Command::Fabsim { .. } => fabsim(&cfg)?,
        Command::FitSaturation { .. } => fit_saturation(&cfg)?,
        Command::AnalyzeG2 { .. } => analyze_g2(&cfg)?,
        Command::SimulateHbt { .. } => simulate_hbt(&cfg)?,
        Command::Lifetime { .. } => lifetime(&cfg)?,
    };

    let mut outputs = outcome.files.names();
    outputs.push("manifest.json".into());
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        subcommand: name.into(),
        config_hash: hash,
        seed: cfg.seed,
        started: started.to_rfc3339(),
        finished: chrono::Utc::now().to_rfc3339(),
        outputs,
        warnings: outcome.warnings,
    };
    let mut files = outcome.files;
    files.add("manifest.json", json(&manifest)?);
    files.commit(&out_dir)?;
    Ok(manifest)
}

fn simulate_geo(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let seed = require_seed(cfg)?;
    let g = &cfg.geo;
    g.device.validate().map_err(geo_error)?;
    g.source.axis().map_err(geo_error)?;
    if g.histogram_bins == 0 {
        return Err(CliError::Validation("geo.histogram_bins must be positive".into()));
    }
    for &na in &g.apertures {
        if !(na > 0.0 && na <= g.device.n_bottom) {
            return Err(CliError::Validation(format!(
                "geo.apertures: {na} outside (0, {}]",
                g.device.n_bottom
            )));
        }
    }
    let run = run_geo(
        &g.device,
        &g.source,
        &g.apertures,
        g.histogram_bins,
        g.device.n_bottom,
        g.rays,
        seed,
        &g.trace,
    )
    .map_err(geo_error)?;
    let mut out = Outcome::new();
    out.files.add(
        "efficiency.csv",
        csv(
            &["na", "eta", "eta_stderr"],
            run.estimates
                .iter()
                .map(|e| vec![num(e.numerical_aperture), num(e.eta), num(e.standard_error)]),
        )?,
    );
    let h = &run.histogram;
    let cumulative = h.cumulative();
    out.files.add(
        "angular_histogram.csv",
        csv(
            &["theta_min_deg", "theta_max_deg", "power_fraction", "cumulative_fraction"],
            (0..h.power_per_bin.len()).map(|i| {
                vec![
                    num(h.bin_edges_theta[i]),
                    num(h.bin_edges_theta[i + 1]),
                    num(h.power_per_bin[i]),
                    num(cumulative[i]),
                ]
            }),
        )?,
    );
    out.files.add("summary.json", json(&run)?);
    Ok(out)
}

#[derive(Serialize)]
struct FdtdSummary {
    grid_nodes: [usize; 3],
    dx_nm: f64,
    memory_mb: f64,
    steps: Vec<usize>,
    total_power: Vec<(f64, f64)>,
}

fn simulate_fdtd(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let f = &cfg.fdtd;
    let sim = &f.simulation;
    let plan = plan_grid(sim).map_err(fdtd_error)?;
    eprintln!(
        "grid {} x {} x {} nodes at {:.2} nm, estimated memory {:.0} MB (budget {:.0} MB)",
        plan.n[0], plan.n[1], plan.n[2], plan.dx_nm, plan.memory_mb, sim.memory_budget_mb
    );
    if plan.memory_mb > sim.memory_budget_mb {
        return Err(CliError::Validation(format!(
            "grid needs {:.0} MB, above the {:.0} MB budget",
            plan.memory_mb, sim.memory_budget_mb
        )));
    }
    if f.apertures.is_empty() {
        return Err(CliError::Validation("fdtd.apertures is empty".into()));
    }
    let mut out = Outcome::new();
    if let Some(sweep) = &f.sweep {
        if sweep.offsets_nm.is_empty() {
            return Err(CliError::Validation("fdtd.sweep.offsets_nm is empty".into()));
        }
        let axis = match sweep.axis {
            SweepAxis::Vertical => DisplacementAxis::Vertical,
            SweepAxis::Lateral => DisplacementAxis::Lateral,
        };
        let points = displacement_sweep(sim, axis, &sweep.offsets_nm, &f.apertures).map_err(fdtd_error)?;
        for p in &points {
            for w in &p.warnings {
                if !out.warnings.contains(w) {
                    out.warnings.push(w.clone());
                }
            }
        }
        out.files.add(
            "sweep.csv",
            csv(
                &["offset_nm", "wavelength_nm", "na", "eta", "relative_eta"],
                points
                    .iter()
                    .map(|p| vec![num(p.offset_nm), num(p.wavelength_nm), num(p.na), num(p.eta), num(p.relative)]),
            )?,
        );
        return Ok(out);
    }
    let run = run_dipole_simulation(sim).map_err(fdtd_error)?;
    let ff = collection_efficiency_fdtd(&run, &f.apertures).map_err(fdtd_error)?;
    out.warnings = ff.warnings.clone();
    out.files.add(
        "efficiency.csv",
        csv(
            &["wavelength_nm", "na", "eta"],
            ff.entries.iter().map(|e| vec![num(e.wavelength_nm), num(e.na), num(e.eta)]),
        )?,
    );
    out.files.add(
        "summary.json",
        json(&FdtdSummary {
            grid_nodes: plan.n,
            dx_nm: plan.dx_nm,
            memory_mb: plan.memory_mb,
            steps: vec![run.steps],
            total_power: ff.total_power.clone(),
        })?,
    );
    if let Some(snap) = &run.snapshot {
        let mut buf = Vec::new();
        write_snapshot(&mut buf, snap).map_err(fdtd_error)?;
        out.files.add("fields.yee", buf);
    }
    Ok(out)
}

fn profile_csv(p: &RadialProfile) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    p.write_csv(&mut buf).map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(buf)
}

#[derive(Serialize)]
struct FabFitOutput<'a> {
    fit: &'a reflector_core::fabsim::ParabolaFit,
    #[serde(skip_serializing_if = "Option::is_none")]
    report: Option<&'a reflector_core::fabsim::PipelineReport>,
}

fn fabsim(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let f = &cfg.fabsim;
    let mut out = Outcome::new();
    if let Some(path) = &f.input {
        let profile = RadialProfile::read_csv(open_input(path)?).map_err(|e| CliError::Validation(e.to_string()))?;
        let window = match f.fit_window_nm {
            Some([a, b]) => (a, b),
            None => default_window(&profile).map_err(|e| CliError::Validation(e.to_string()))?,
        };
        let fit = fit_parabola(&profile, window).map_err(|e| CliError::Validation(e.to_string()))?;
        let residuals = fit_residuals(&profile, &fit);
        out.files.add(
            "fit_residuals.csv",
            csv(
                &["r_nm", "z_nm", "residual_nm"],
                profile
                    .radii()
                    .iter()
                    .zip(profile.heights())
                    .zip(&residuals)
                    .map(|((r, z), d)| vec![num(*r), num(*z), num(*d)]),
            )?,
        );
        out.files.add("fit.json", json(&FabFitOutput { fit: &fit, report: None })?);
        return Ok(out);
    }
    f.stack.validate().map_err(|e| CliError::Validation(e.to_string()))?;
    if !(f.disk_radius_nm > 0.0) || !(f.grid_step_nm > 0.0) {
        return Err(CliError::Validation("fabsim.disk_radius_nm and grid_step_nm must be positive".into()));
    }
    let result = process_pipeline_on_grid(&f.stack, f.disk_radius_nm, f.target_depth_um, f.grid_step_nm)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    for (i, step) in result.steps.iter().enumerate() {
        out.files.add(format!("step{}_{}.csv", i + 1, step.name), profile_csv(&step.profile)?);
    }
    out.files.add("final_profile.csv", profile_csv(&result.final_profile)?);
    if result.report.premature_termination {
        out.warnings.push(format!(
            "mask remained on a flat top of radius {:.0} nm when the etch stopped",
            result.report.flat_top_radius_nm
        ));
    }
    out.files.add(
        "fit.json",
        json(&FabFitOutput {
            fit: &result.fit,
            report: Some(&result.report),
        })?,
    );
    Ok(out)
}

#[derive(Serialize)]
struct SaturationOutput {
    linear_term: reflector_core::photometry::SaturationFit,
    purity_scaled: reflector_core::photometry::SaturationFit,
    purity: f64,
    g2_zero: f64,
    linear_term_higher: bool,
    brightness_linear_term: reflector_core::photometry::BrightnessReport,
    brightness_purity_scaled: reflector_core::photometry::BrightnessReport,
}

fn saturation_data(cfg: &RunConfig) -> Result<SaturationDataset, CliError> {
    let s = &cfg.saturation;
    match (&s.input, &s.synthetic) {
        (Some(path), _) => SaturationDataset::read_csv(open_input(path)?, s.repetition_rate_hz, s.pulse_length_s)
            .map_err(photometry_error),
        (None, Some(syn)) => Ok(SaturationDataset::new(
            syn.powers_mw
                .iter()
                .map(|&p| SaturationPoint {
                    power_mw: p,
                    counts_per_s: saturation_model(p, syn.f_sat_cps, syn.p_sat_mw, syn.slope_cps_per_mw),
                    sigma_cps: None,
                })
                .collect(),
            s.repetition_rate_hz,
            s.pulse_length_s,
        )),
        (None, None) => Err(CliError::Validation(
            "fit-saturation needs --input or a [saturation.synthetic] table".into(),
        )),
    }
}

fn fit_saturation(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let s = &cfg.saturation;
    let data = saturation_data(cfg)?;
    data.validate().map_err(photometry_error)?;
    let cmp = compare_background_paths(&data, s.g2_zero).map_err(photometry_error)?;
    let report = |f_sat: f64| {
        brightness(f_sat, s.repetition_rate_hz, s.eta_detector, s.eta_transmission, s.sigma).map_err(photometry_error)
    };
    let result = SaturationOutput {
        linear_term: cmp.linear_term,
        purity_scaled: cmp.purity_scaled,
        purity: cmp.purity,
        g2_zero: s.g2_zero,
        linear_term_higher: cmp.linear_term_higher,
        brightness_linear_term: report(cmp.linear_term.f_sat)?,
        brightness_purity_scaled: report(cmp.purity_scaled.f_sat)?,
    };
    let mut out = Outcome::new();
    if result.linear_term_higher {
        out.warnings.push(format!(
            "linear-term F_sat {:.4e} exceeds purity-scaled F_sat {:.4e}",
            cmp.linear_term.f_sat, cmp.purity_scaled.f_sat
        ));
    }
    let (lo, hi) = data
        .points
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), p| (lo.min(p.power_mw), hi.max(p.power_mw)));
    let curve = (0..MODEL_CURVE_POINTS).map(|i| {
        let p = lo * (hi / lo).powf(i as f64 / (MODEL_CURVE_POINTS - 1) as f64);
        vec![num(p), num(cmp.linear_term.evaluate(p)), num(cmp.purity_scaled.evaluate(p))]
    });
    out.files.add(
        "model_curve.csv",
        csv(&["power_mw", "linear_term_cps", "purity_scaled_cps"], curve)?,
    );
    out.files.add("fit.json", json(&result)?);
    Ok(out)
}

fn read_histogram(path: &Path, repetition_rate_hz: f64) -> Result<CoincidenceHistogram, CliError> {
    if !(repetition_rate_hz > 0.0) {
        return Err(CliError::Validation("repetition_rate_hz must be positive".into()));
    }
    CoincidenceHistogram::read_csv(open_input(path)?, 1.0 / repetition_rate_hz).map_err(photometry_error)
}

#[derive(Serialize)]
struct G2Output {
    result: reflector_core::photometry::G2Result,
    #[serde(skip_serializing_if = "Option::is_none")]
    decomposition: Option<reflector_core::photometry::SignalBackground>,
}

fn analyze_g2(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let g = &cfg.g2;
    let path = g
        .input
        .as_ref()
        .ok_or_else(|| CliError::Validation("analyze-g2 needs --input or g2.input".into()))?;
    let h = read_histogram(path, g.repetition_rate_hz)?;
    let result = g2_from_histogram(&h).map_err(photometry_error)?;
    let decomposition = match g.total_rate_cps {
        Some(rate) => Some(g2_decompose(result.g2_zero, rate).map_err(photometry_error)?),
        None => None,
    };
    let mut out = Outcome::new();
    out.files.add("g2.json", json(&G2Output { result, decomposition })?);
    Ok(out)
}

fn hbt_model(cfg: &RunConfig, seed: u64) -> Result<EmitterModel, CliError> {
    let h = &cfg.hbt;
    if !(h.purity > 0.0 && h.purity <= 1.0) {
        return Err(CliError::Validation(format!("hbt.purity {} outside (0, 1]", h.purity)));
    }
    if !(h.duration_s > 0.0) {
        return Err(CliError::Validation("hbt.duration_s must be positive".into()));
    }
    let mut m = EmitterModel::with_purity(
        h.emission_probability,
        h.purity,
        h.radiative_lifetime_s,
        h.repetition_rate_hz,
        seed,
    );
    m.split_ratio = h.split_ratio;
    m.validate().map_err(photometry_error)?;
    Ok(m)
}

#[derive(Serialize)]
struct HbtOutput {
    result: reflector_core::photometry::G2Result,
    purity_generated: f64,
    expected_coincidences: f64,
    clicks_a: usize,
    clicks_b: usize,
}

fn simulate_hbt(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let seed = require_seed(cfg)?;
    let model = hbt_model(cfg, seed)?;
    let run = simulate_hbt_with(&model, cfg.hbt.duration_s, &cfg.hbt.histogram).map_err(photometry_error)?;
    let result = g2_from_histogram(&run.histogram).map_err(photometry_error)?;
    let mut out = Outcome::new();
    out.warnings = run.warnings.clone();
    let mut hist = Vec::new();
    run.histogram.write_csv(&mut hist).map_err(photometry_error)?;
    out.files.add("histogram.csv", hist);
    out.files.add(
        "g2.json",
        json(&HbtOutput {
            result,
            purity_generated: model.purity(),
            expected_coincidences: run.expected_coincidences,
            clicks_a: run.clicks_a.len(),
            clicks_b: run.clicks_b.len(),
        })?,
    );
    Ok(out)
}

fn lifetime(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let l = &cfg.lifetime;
    let h = match &l.input {
        Some(path) => read_histogram(path, l.repetition_rate_hz)?,
        None => {
            let seed = require_seed(cfg)?;
            let model = hbt_model(cfg, seed)?;
            simulate_hbt_with(&model, cfg.hbt.duration_s, &cfg.hbt.histogram)
                .map_err(photometry_error)?
                .histogram
        }
    };
    let fit = lifetime_fit(&h).map_err(photometry_error)?;
    let mut out = Outcome::new();
    out.warnings = fit.warnings.clone();
    out.files.add("lifetime.json", json(&fit)?);
    Ok(out)
}
