//! Acceptance run: one PASS/FAIL line per criterion, then a summary.
//!
//! Runs without the libtest harness so every line reaches stdout. The
//! process fails if any criterion outside `KNOWN_RED` fails.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use reflector_core::fabsim::{fit_parabola, process_pipeline, transfer_etch, EtchStack, RadialProfile};
use reflector_core::fdtd::{
    collection_efficiency_fdtd, displacement_sweep, run_dipole_simulation, step_fields, Axis, Boundary,
    Component, DisplacementAxis, FieldState, SimulationConfig, YeeGrid,
};
use reflector_core::geo_optics::{
    collection_efficiency_geo, critical_angle, fresnel_power, run_geo, sample_dipole_rays, trace_ray,
    DipoleSource, ParaboloidDevice, Polarization, SurfaceTag, TraceOptions,
};
use reflector_core::photometry::{
    brightness, fit_saturation, g2_decompose, g2_from_histogram, g2_from_rates, laplace_peak_histogram,
    lifetime_fit, simulate_hbt, EmitterModel, SaturationDataset, SaturationPoint, DETECTOR_EFFICIENCY,
    SETUP_TRANSMISSION,
};

/// Criteria whose targets the faithful model does not reach; each is
/// analysed in the project notes and still reported every run.
const KNOWN_RED: &[u32] = &[1];

const SUITE_LIMIT: Duration = Duration::from_secs(600);

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

fn unpatterned_baseline() -> Verdict {
    let device = ParaboloidDevice::unpatterned(100.0, 1.518);
    let t = Instant::now();
    let est = collection_efficiency_geo(&device, &DipoleSource::perpendicular(), 1.3, 1_000_000, 1).unwrap();
    let secs = t.elapsed().as_secs_f64();
    verdict(
        within(est.eta, 0.05, 0.02) && secs < 10.0,
        format!("eta(NA 1.3) = {:.4} ± {:.4}, target 0.05 ± 0.02, {secs:.1} s", est.eta, est.standard_error),
    )
}

fn critical_angle_check() -> Verdict {
    let theta_c = (1.0f64 / 2.4).asin();
    let above = [theta_c, theta_c + 1e-9, 0.5, 0.8, 1.2, PI / 2.0];
    let mut exact = true;
    for &a in &above {
        for pol in [Polarization::S, Polarization::P] {
            exact &= fresnel_power(2.4, 1.0, a, pol).unwrap().reflectance == 1.0;
        }
    }
    let below = fresnel_power(2.4, 1.0, theta_c - 1e-3, Polarization::S).unwrap().reflectance;
    let deg = theta_c.to_degrees();
    let helper = critical_angle(2.4, 1.0).unwrap();
    verdict(
        exact && below < 1.0 && helper == theta_c && within(deg, 24.62, 0.005),
        format!("theta_c = {deg:.4} deg, R = 1 at and above: {exact}, R just below = {below:.4}"),
    )
}

struct FdtdResults {
    eta_on_axis_15: f64,
    eta_on_axis_12: f64,
    eta_vertical_12: f64,
    eta_lateral_12: f64,
    secs_15: f64,
    secs_12: f64,
}

fn eta_637(config: &SimulationConfig) -> f64 {
    let run = run_dipole_simulation(config).unwrap();
    collection_efficiency_fdtd(&run, &[1.3]).unwrap().eta(637.0, 1.3).unwrap()
}

fn fdtd_runs() -> FdtdResults {
    let desk = SimulationConfig::default();
    let t = Instant::now();
    let eta_on_axis_15 = eta_637(&desk);
    let secs_15 = t.elapsed().as_secs_f64();

    let coarse = SimulationConfig {
        resolution: 12.0,
        ..SimulationConfig::default()
    };
    let t = Instant::now();
    let vertical = displacement_sweep(&coarse, DisplacementAxis::Vertical, &[0.0, 200.0], &[1.3]).unwrap();
    let mut lateral = coarse.clone();
    lateral.source.position_nm = [200.0, 0.0, 0.0];
    let eta_lateral_12 = eta_637(&lateral);
    let secs_12 = t.elapsed().as_secs_f64();
    FdtdResults {
        eta_on_axis_15,
        eta_on_axis_12: vertical[0].eta,
        eta_vertical_12: vertical[1].eta,
        eta_lateral_12,
        secs_15,
        secs_12,
    }
}

fn device_efficiency(r: &FdtdResults) -> Verdict {
    verdict(
        within(r.eta_on_axis_15, 0.77, 0.10),
        format!(
            "eta(637 nm, NA 1.3) = {:.4} at 15 cells/lambda ({:.0} s), {:.4} at 12 cells/lambda; target 0.77 ± 0.10",
            r.eta_on_axis_15, r.secs_15, r.eta_on_axis_12
        ),
    )
}

fn displacement_tolerance(r: &FdtdResults) -> Verdict {
    let rel = r.eta_lateral_12 / r.eta_on_axis_12 - 1.0;
    verdict(
        r.eta_vertical_12 >= 0.60 && rel.abs() <= 0.15,
        format!(
            "12 cells/lambda: vertical +200 nm eta = {:.4} (>= 0.60), lateral 200 nm eta = {:.4}, {:+.1}% of on-axis (within 15%), {:.0} s",
            r.eta_vertical_12,
            r.eta_lateral_12,
            100.0 * rel,
            r.secs_12
        ),
    )
}

fn angular_saturation() -> Verdict {
    let device = ParaboloidDevice::default();
    let na_30 = device.n_bottom * 30f64.to_radians().sin();
    let run = run_geo(
        &device,
        &DipoleSource::perpendicular(),
        &[na_30, 1.3],
        90,
        device.n_bottom,
        200_000,
        2,
        &TraceOptions::default(),
    )
    .unwrap();
    let ratio = run.estimates[0].eta / run.estimates[1].eta;
    verdict(
        ratio >= 0.90,
        format!(
            "eta(30 deg, NA {na_30:.3}) / eta(NA 1.3) = {:.4} / {:.4} = {ratio:.4}, target >= 0.90",
            run.estimates[0].eta, run.estimates[1].eta
        ),
    )
}

fn fabrication_pipeline() -> Verdict {
    let t = Instant::now();
    let stack = EtchStack::default();
    let res = process_pipeline(&stack, 2500.0, 5.0).unwrap();

    // Closed form for a fully consumed spherical mask of radius R_c etched at
    // selectivity s: depth s·r²/(2R_c) = r²/(4f), so f = R_c/(2s).
    let rc = res.report.sphere_radius_nm;
    let s = stack.selectivity_diamond_over_mask;
    let t0 = stack.mask_thickness_nm;
    let reach = (2.0 * rc * t0 - t0 * t0).sqrt();
    let mask = RadialProfile::sample(reach, 1.0, |r| (t0 - (rc - (rc * rc - r * r).sqrt())).max(0.0)).unwrap();
    let flat = mask.map(|_, _| 0.0);
    let consumed = transfer_etch(&flat, &mask, s, t0 + 10.0).unwrap();
    let paraxial = fit_parabola(&consumed.substrate, (0.0, 0.5 * reach)).unwrap();
    let closed = rc / (2.0 * s);
    let f_err = paraxial.focal_length_nm / closed - 1.0;
    let secs = t.elapsed().as_secs_f64();
    verdict(
        within(res.report.depth_nm, 5000.0, 50.0) && res.fit.rmse_nm < 50.0 && f_err.abs() <= 0.01 && secs < 1.0,
        format!(
            "depth = {:.1} nm, fit rmse = {:.2} nm, paraxial f = {:.3} nm vs R_c/(2s) = {closed:.3} nm ({:+.3}%), {secs:.2} s",
            res.report.depth_nm,
            res.fit.rmse_nm,
            paraxial.focal_length_nm,
            100.0 * f_err
        ),
    )
}

fn photometry_chain() -> Verdict {
    let b = brightness(0.60e6, 4.88e6, DETECTOR_EFFICIENCY, SETUP_TRANSMISSION, 1.0).unwrap();
    verdict(
        within(b.detection_probability, 0.12, 0.01) && within(b.eta0, 0.48, 0.05) && within(b.eta_setup, 0.2538, 5e-5),
        format!(
            "detection probability = {:.4} (0.12 ± 0.01), eta_setup = {:.4}, eta0 = {:.4} (0.48 ± 0.05)",
            b.detection_probability, b.eta_setup, b.eta0
        ),
    )
}

fn estimator_equivalence() -> Verdict {
    let t = Instant::now();
    let model = EmitterModel::with_purity(0.12, 0.9015, 12.67e-9, 4.88e6, 8);
    let target = 1.0 - 0.9015f64.powi(2);
    let run = simulate_hbt(&model, 1.0).unwrap();
    let g = g2_from_histogram(&run.histogram).unwrap();
    let total = run.histogram.total();
    let secs = t.elapsed().as_secs_f64();
    verdict(
        (g.g2_zero - target).abs() <= 2.0 * g.g2_sigma && total >= 100_000 && secs < 30.0,
        format!(
            "g2(0) = {:.4} ± {:.4} vs {target:.4}, {total} coincidences, {secs:.1} s",
            g.g2_zero, g.g2_sigma
        ),
    )
}

fn round_trip_fits() -> Verdict {
    let t = Instant::now();
    let (f_sat, p_sat, slope) = (4.63e6, 0.32, 2e5);
    let points = (0..16)
        .map(|i| {
            let p = 0.01 * 1.4f64.powi(i);
            SaturationPoint {
                power_mw: p,
                counts_per_s: f_sat / (1.0 + p_sat / p) + slope * p,
                sigma_cps: None,
            }
        })
        .collect();
    let fit = fit_saturation(&SaturationDataset::new(points, 78.1e6, 1e-11)).unwrap();
    let f_err = fit.f_sat / f_sat - 1.0;
    let p_err = fit.p_sat / p_sat - 1.0;

    let tau = 12.67e-9;
    let (expected, mut h) = laplace_peak_histogram(0.1e-9, 5, 1.0 / 4.88e6, tau, 1e6, 0.0);
    h.counts = expected.iter().map(|&c| c.round() as u64).collect();
    let life = lifetime_fit(&h).unwrap();
    let tau_err = life.tau_s / tau - 1.0;
    let secs = t.elapsed().as_secs_f64();
    verdict(
        f_err.abs() <= 1e-6 && p_err.abs() <= 1e-6 && tau_err.abs() <= 0.03 && secs < 5.0,
        format!(
            "F_sat rel err {f_err:.1e}, P_sat rel err {p_err:.1e}, tau = {:.3} ns ({:+.2}%), {secs:.2} s",
            life.tau_s * 1e9,
            100.0 * tau_err
        ),
    )
}

fn ray_power_drift() -> f64 {
    let opts = TraceOptions {
        min_weight: 1e-3,
        ..TraceOptions::default()
    };
    let mut worst: f64 = 0.0;
    for device in [ParaboloidDevice::default(), ParaboloidDevice::unpatterned(100.0, 1.518)] {
        for source in [
            DipoleSource::perpendicular(),
            DipoleSource::parallel(),
            DipoleSource {
                orientation: [0.3, -0.5, 0.8],
                ..DipoleSource::perpendicular()
            },
        ] {
            for mut ray in sample_dipole_rays(&source, 2000, 5).unwrap() {
                ray.origin = source.absolute_position(&device);
                ray.power_weight = 1.0;
                worst = worst.max((trace_ray(&ray, &device, &opts).accounted_weight() - 1.0).abs());
            }
        }
    }
    worst
}

/// Largest angle between a wall reflection of a focal ray and the −z axis.
fn focal_deviation() -> f64 {
    let mut worst: f64 = 0.0;
    for device in [
        ParaboloidDevice::default(),
        ParaboloidDevice {
            focal_length_nm: 500.0,
            height_um: 3.0,
            ..ParaboloidDevice::default()
        },
    ] {
        for k in 0..=300 {
            let theta = 1e-3 + (PI - 0.6) * k as f64 / 300.0;
            for phi in [0.0f64, 1.1, 2.9, 4.4] {
                let d = Vector3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos());
                let hit = device.intersect(&device.focus(), &d).unwrap();
                if hit.surface != SurfaceTag::ParaboloidWall {
                    continue;
                }
                let n = hit.outward_normal;
                let r = d - n * (2.0 * d.dot(&n));
                let down = -Vector3::z();
                worst = worst.max(r.cross(&down).norm().atan2(r.dot(&down)));
            }
        }
    }
    worst
}

/// Drift of the leapfrog energy `½Σ E^n·E^{n+1} + ½Σ (H^{n+½})²` in a
/// closed vacuum cavity. Every field node on a PEC face stays zero, so plain
/// sums suffice.
fn vacuum_energy_drift() -> f64 {
    let g = YeeGrid::from_fn([24; 3], 10.0, 0.5, [0.0; 3], [[Boundary::Pec; 2]; 3], 4, 0.0, |_| 1.0).unwrap();
    let mut s = FieldState::new(&g);
    s.set(&g, Component::E(Axis::X), 11, 12, 12, 1.0);
    s.set(&g, Component::E(Axis::Z), 7, 15, 9, -0.6);
    s.set(&g, Component::E(Axis::Y), 16, 8, 14, 0.4);
    let snapshot = |s: &FieldState| Axis::ALL.map(|a| s.field(Component::E(a)).to_vec());
    let energy = |s: &FieldState, prev: &[Vec<f32>; 3]| -> f64 {
        let mut w = 0.0;
        for a in Axis::ALL {
            let e = s.field(Component::E(a));
            w += e.iter().zip(&prev[a.index()]).map(|(&x, &y)| x as f64 * y as f64).sum::<f64>();
            w += s.field(Component::H(a)).iter().map(|&h| (h as f64).powi(2)).sum::<f64>();
        }
        0.5 * w
    };
    let mut prev = snapshot(&s);
    step_fields(&mut s, &g).unwrap();
    let w0 = energy(&s, &prev);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        prev = snapshot(&s);
        step_fields(&mut s, &g).unwrap();
        worst = worst.max((energy(&s, &prev) - w0).abs() / w0);
    }
    worst
}

fn rate_round_trip_error() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let total = 10f64.powf(rng.gen_range(3.0..8.0));
        let signal = total * rng.gen_range(0.1..1.0);
        let background = total - signal;
        let split = g2_decompose(g2_from_rates(signal, background), total).unwrap();
        worst = worst
            .max((split.signal / signal - 1.0).abs())
            .max((split.background - background).abs() / total);
    }
    worst
}

/// Counts of etch-property violations over random profiles: a deeper etch
/// never raises the surface, and two etches equal one of the summed budget.
fn etch_violations() -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let radii: Vec<f64> = (0..40).map(|i| i as f64 * 5.0).collect();
    let mut bad = 0;
    for _ in 0..500 {
        let z: Vec<f64> = radii.iter().map(|_| rng.gen_range(-100.0..100.0)).collect();
        let t: Vec<f64> = radii.iter().map(|_| rng.gen_range(0.0..300.0)).collect();
        let surface = RadialProfile::new(radii.clone(), z).unwrap();
        let mask = RadialProfile::new(radii.clone(), t).unwrap();
        let s = rng.gen_range(0.5..40.0);
        let (e1, e2) = (rng.gen_range(0.0..400.0), rng.gen_range(0.0..400.0));
        let first = transfer_etch(&surface, &mask, s, e1).unwrap();
        let once = transfer_etch(&surface, &mask, s, e1 + e2).unwrap();
        let twice = transfer_etch(&first.substrate, &first.mask, s, e2).unwrap();
        for ((a, b), c) in once
            .substrate
            .heights()
            .iter()
            .zip(twice.substrate.heights())
            .zip(first.substrate.heights())
        {
            if (a - b).abs() > 1e-9 * (1.0 + a.abs()) || a > c {
                bad += 1;
            }
        }
    }
    bad
}

fn property_suites(start: Instant) -> Verdict {
    let power = ray_power_drift();
    let focal = focal_deviation();
    let energy = vacuum_energy_drift();
    let rates = rate_round_trip_error();
    let etch = etch_violations();
    let elapsed = start.elapsed();
    let secs = elapsed.as_secs_f64();
    verdict(
        power <= 1e-9 && focal <= 1e-9 && energy <= 1e-3 && rates <= 1e-12 && etch == 0 && elapsed < SUITE_LIMIT,
        format!(
            "ray power {power:.1e}, focal {focal:.1e} rad, vacuum energy {energy:.1e}, g2 round trip {rates:.1e}, etch violations {etch}, acceptance run {secs:.0} s"
        ),
    )
}

/// Criterion numbers given on the command line select a subset; other
/// arguments (test-runner flags) are ignored.
fn selection() -> Vec<u32> {
    let picked: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    if picked.is_empty() {
        (1..=10).collect()
    } else {
        picked
    }
}

fn main() {
    let start = Instant::now();
    let selected = selection();
    let mut results: Vec<(u32, &str, Verdict)> = Vec::new();
    let mut report = |id: u32, name: &'static str, check: &dyn Fn() -> Verdict| {
        if !selected.contains(&id) {
            return;
        }
        let v = check();
        let status = match (v.pass, KNOWN_RED.contains(&id)) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => "FAIL",
        };
        println!("criterion {id:>2} {status:<12} {name}: {}", v.detail);
        results.push((id, name, v));
    };

    let fdtd = std::sync::OnceLock::new();
    report(1, "unpatterned baseline", &unpatterned_baseline);
    report(2, "critical angle", &critical_angle_check);
    report(3, "device efficiency", &|| device_efficiency(fdtd.get_or_init(fdtd_runs)));
    report(4, "displacement tolerance", &|| displacement_tolerance(fdtd.get_or_init(fdtd_runs)));
    report(5, "angular saturation", &angular_saturation);
    report(6, "fabrication pipeline", &fabrication_pipeline);
    report(7, "photometry chain", &photometry_chain);
    report(8, "estimator equivalence", &estimator_equivalence);
    report(9, "round-trip fits", &round_trip_fits);
    report(10, "property suites", &|| property_suites(start));

    let passed = results.iter().filter(|r| r.2.pass).count();
    let unexpected: Vec<u32> = results
        .iter()
        .filter(|r| !r.2.pass && !KNOWN_RED.contains(&r.0))
        .map(|r| r.0)
        .collect();
    println!(
        "acceptance: {passed}/{} criteria pass, unexpected failures {unexpected:?}, {:.0} s",
        results.len(),
        start.elapsed().as_secs_f64()
    );
    if !unexpected.is_empty() {
        std::process::exit(1);
    }
}
