//! Reflow, transfer etch, and the full gray-scale pipeline.

use serde::{Deserialize, Serialize};

use super::fit::{default_window, fit_parabola, ParabolaFit};
use super::{FabError, RadialProfile};

pub const DEFAULT_GRID_STEP_NM: f64 = 1.0;
/// Radial margin sampled beyond the resist disk edge.
const FIELD_MARGIN_NM: f64 = 500.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EtchStack {
    pub resist_thickness_nm: f64,
    pub mask_thickness_nm: f64,
    pub selectivity_mask_over_resist: f64,
    pub selectivity_diamond_over_mask: f64,
}

impl Default for EtchStack {
    fn default() -> Self {
        Self {
            resist_thickness_nm: 280.0,
            mask_thickness_nm: 200.0,
            selectivity_mask_over_resist: 1.0,
            selectivity_diamond_over_mask: 28.0,
        }
    }
}

impl EtchStack {
    /// Zero resist thickness is accepted so that a blank run produces a flat
    /// profile; everything else must be strictly positive.
    pub fn validate(&self) -> Result<(), FabError> {
        let fields = [
            ("resist_thickness_nm", self.resist_thickness_nm, true),
            ("mask_thickness_nm", self.mask_thickness_nm, false),
            ("selectivity_mask_over_resist", self.selectivity_mask_over_resist, false),
            ("selectivity_diamond_over_mask", self.selectivity_diamond_over_mask, false),
        ];
        for (name, v, zero_ok) in fields {
            let ok = v.is_finite() && (v > 0.0 || (zero_ok && v == 0.0));
            if !ok {
                return Err(FabError::InvalidStack(format!("{name} = {v}")));
            }
        }
        Ok(())
    }
}

/// Height of the volume-conserving spherical cap on a disk of radius `a`
/// and initial thickness `t`: the positive root of `h³ + 3a²h − 6a²t = 0`.
pub fn reflow_cap_height(disk_radius_nm: f64, resist_thickness_nm: f64) -> f64 {
    let a2 = disk_radius_nm * disk_radius_nm;
    let t = resist_thickness_nm;
    if t <= 0.0 {
        return 0.0;
    }
    let g = |h: f64| h * h * h + 3.0 * a2 * h - 6.0 * a2 * t;
    // g is increasing, g(0) < 0 and g(2t) > 0: safeguarded Newton.
    let (mut lo, mut hi) = (0.0, 2.0 * t);
    let mut h = t;
    for _ in 0..200 {
        let gh = g(h);
        if gh > 0.0 {
            hi = h;
        } else {
            lo = h;
        }
        let next = h - gh / (3.0 * h * h + 3.0 * a2);
        let next = if next > lo && next < hi { next } else { 0.5 * (lo + hi) };
        if next == h || hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
        h = next;
    }
    h
}

/// Radius of curvature of a cap of height `h` on base radius `a`.
pub fn cap_sphere_radius(disk_radius_nm: f64, cap_height_nm: f64) -> f64 {
    (disk_radius_nm * disk_radius_nm + cap_height_nm * cap_height_nm) / (2.0 * cap_height_nm)
}

fn cap_height_at(r: f64, a: f64, h: f64, rc: f64) -> f64 {
    if r >= a || h <= 0.0 {
        return 0.0;
    }
    // h − (Rc − √(Rc² − r²)), written to avoid cancellation for flat caps.
    (h - r * r / (rc + (rc * rc - r * r).max(0.0).sqrt())).max(0.0)
}

/// Reflowed resist: spherical cap pinned at the disk edge with the disk's
/// volume, sampled from the axis to `a + 500 nm`.
pub fn reflow_profile(disk_radius_nm: f64, resist_thickness_nm: f64) -> Result<RadialProfile, FabError> {
    reflow_profile_on_grid(disk_radius_nm, resist_thickness_nm, DEFAULT_GRID_STEP_NM)
}

pub fn reflow_profile_on_grid(
    disk_radius_nm: f64,
    resist_thickness_nm: f64,
    step_nm: f64,
) -> Result<RadialProfile, FabError> {
    if !(disk_radius_nm > 0.0) || !(resist_thickness_nm >= 0.0) {
        return Err(FabError::InvalidArgument(format!(
            "disk radius {disk_radius_nm} and thickness {resist_thickness_nm} must be positive"
        )));
    }
    let a = disk_radius_nm;
    let h = reflow_cap_height(a, resist_thickness_nm);
    let rc = if h > 0.0 { cap_sphere_radius(a, h) } else { f64::INFINITY };
    RadialProfile::sample(a + FIELD_MARGIN_NM, step_nm, |r| cap_height_at(r, a, h, rc))
}

/// Result of a vertical transfer etch through a mask.
#[derive(Debug, Clone, PartialEq)]
pub struct EtchOutcome {
    /// Etched substrate surface.
    pub substrate: RadialProfile,
    /// Mask thickness left on top of the substrate.
    pub mask: RadialProfile,
}

impl EtchOutcome {
    /// Substrate plus the remaining mask.
    pub fn composite(&self) -> RadialProfile {
        self.substrate.map(|r, z| z + self.mask.height_at(r))
    }
}

/// Purely vertical etch: at each radius the budget first consumes the local
/// mask thickness, then removes `selectivity` times the remainder from the
/// substrate. `mask` is resampled onto the substrate's radii.
pub fn transfer_etch(
    surface: &RadialProfile,
    mask: &RadialProfile,
    selectivity: f64,
    etch_amount_nm: f64,
) -> Result<EtchOutcome, FabError> {
    if !(etch_amount_nm >= 0.0) || !etch_amount_nm.is_finite() {
        return Err(FabError::InvalidArgument(format!("etch amount {etch_amount_nm} must be >= 0")));
    }
    if !(selectivity > 0.0) || !selectivity.is_finite() {
        return Err(FabError::InvalidArgument(format!("selectivity {selectivity} must be > 0")));
    }
    let mask = mask.resample_like(surface);
    if mask.heights().iter().any(|&t| t < 0.0) {
        return Err(FabError::InvalidArgument("mask thickness must be >= 0".into()));
    }
    let substrate = surface.map(|r, z| {
        let t = mask.height_at(r);
        z - selectivity * (etch_amount_nm - t).max(0.0)
    });
    let remaining = mask.map(|_, t| (t - etch_amount_nm).max(0.0));
    Ok(EtchOutcome {
        substrate,
        mask: remaining,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProcessStep {
    pub name: &'static str,
    /// Top surface after this step (composite of all layers).
    pub profile: RadialProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub cap_height_nm: f64,
    pub sphere_radius_nm: f64,
    /// Etch amount of the resist-to-mask transfer, in resist-equivalent nm.
    pub mask_etch_nm: f64,
    /// Etch amount of the mask-to-diamond transfer, in mask-equivalent nm.
    pub diamond_etch_nm: f64,
    /// Relief of the final diamond surface.
    pub depth_nm: f64,
    /// Whether mask remained on the top of the structure when etching stopped.
    pub premature_termination: bool,
    /// Radius of the flat top left by the remaining mask (0 if none).
    pub flat_top_radius_nm: f64,
    /// Peak mask thickness after the first transfer.
    pub mask_peak_nm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineResult {
    pub steps: Vec<ProcessStep>,
    pub final_profile: RadialProfile,
    pub fit: ParabolaFit,
    pub report: PipelineReport,
}

/// Resist disk → reflow → 1:1 transfer into the hard mask → selective
/// transfer into diamond, then a parabola fit over the default window.
///
/// The first transfer runs exactly long enough to clear the resist at the
/// apex, so the mask keeps the top `mask_thickness` of the cap shape; the mask
/// etch stops on diamond. The second transfer is sized so the open field
/// reaches the target depth.
pub fn process_pipeline(
    stack: &EtchStack,
    disk_radius_nm: f64,
    diamond_etch_depth_target_um: f64,
) -> Result<PipelineResult, FabError> {
    process_pipeline_on_grid(stack, disk_radius_nm, diamond_etch_depth_target_um, DEFAULT_GRID_STEP_NM)
}

pub fn process_pipeline_on_grid(
    stack: &EtchStack,
    disk_radius_nm: f64,
    diamond_etch_depth_target_um: f64,
    step_nm: f64,
) -> Result<PipelineResult, FabError> {
    stack.validate()?;
    if !(diamond_etch_depth_target_um > 0.0) {
        return Err(FabError::InvalidArgument(format!(
            "target depth {diamond_etch_depth_target_um} um must be positive"
        )));
    }
    let a = disk_radius_nm;
    let r_max = a + FIELD_MARGIN_NM;
    let disk = RadialProfile::sample(r_max, step_nm, |r| {
        if r <= a {
            stack.resist_thickness_nm
        } else {
            0.0
        }
    })?;
    let cap = reflow_profile_on_grid(a, stack.resist_thickness_nm, step_nm)?;
    let cap_height = cap.max_height();
    let sphere_radius = if cap_height > 0.0 {
        cap_sphere_radius(a, cap_height)
    } else {
        f64::INFINITY
    };

    // Resist over a mask film, heights measured from the diamond surface.
    let film = cap.map(|_, _| stack.mask_thickness_nm);
    let first = transfer_etch(&film, &cap, stack.selectivity_mask_over_resist, cap_height)?;
    let mask = first.substrate.map(|_, t| t.max(0.0));
    let mask_peak = mask.max_height();

    let diamond = cap.map(|_, _| 0.0);
    let target_nm = diamond_etch_depth_target_um * 1000.0;
    let s = stack.selectivity_diamond_over_mask;
    let diamond_etch = target_nm / s;
    let second = transfer_etch(&diamond, &mask, s, diamond_etch)?;
    let final_profile = second.substrate.clone();

    let covered: Vec<bool> = second.mask.heights().iter().map(|&t| t > 0.0).collect();
    let premature = covered.first().copied().unwrap_or(false);
    let flat_top_radius = if premature {
        let idx = covered.iter().position(|&c| !c).unwrap_or(covered.len());
        final_profile.radii()[idx.saturating_sub(1)]
    } else {
        0.0
    };

    let window = default_window(&final_profile)?;
    let fit = fit_parabola(&final_profile, window)?;

    let steps = vec![
        ProcessStep { name: "resist_disk", profile: disk },
        ProcessStep {
            name: "reflow",
            profile: cap.map(|_, z| z + stack.mask_thickness_nm),
        },
        ProcessStep { name: "mask_transfer", profile: mask.clone() },
        ProcessStep { name: "diamond_transfer", profile: final_profile.clone() },
    ];
    let report = PipelineReport {
        cap_height_nm: cap_height,
        sphere_radius_nm: sphere_radius,
        mask_etch_nm: cap_height,
        diamond_etch_nm: diamond_etch,
        depth_nm: final_profile.max_height() - final_profile.min_height(),
        premature_termination: premature,
        flat_top_radius_nm: flat_top_radius,
        mask_peak_nm: mask_peak,
    };
    Ok(PipelineResult {
        steps,
        final_profile,
        fit,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    /// Independent root of the cap volume equation by plain bisection.
    fn bisect_cap(a: f64, t: f64) -> f64 {
        let vol = |h: f64| std::f64::consts::PI * h * (3.0 * a * a + h * h) / 6.0;
        let target = std::f64::consts::PI * a * a * t;
        let (mut lo, mut hi) = (0.0, 10.0 * t);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if vol(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn cap_height_for_two_micron_disk() {
        let h = reflow_cap_height(2000.0, 280.0);
        assert_relative_eq!(h, bisect_cap(2000.0, 280.0), max_relative = 1e-12);
        // Frozen from the bisection oracle above.
        assert_relative_eq!(h, 546.405, epsilon = 1e-3);
    }

    #[test]
    fn reflow_conserves_volume() {
        for (a, t) in [(2000.0, 280.0), (2500.0, 280.0), (800.0, 50.0)] {
            let p = reflow_profile(a, t).unwrap();
            let disk = std::f64::consts::PI * a * a * t;
            assert_relative_eq!(p.volume(), disk, max_relative = 1e-3);
        }
    }

    #[test]
    fn thin_resist_gives_thin_cap() {
        assert_eq!(reflow_cap_height(2000.0, 0.0), 0.0);
        let h = reflow_cap_height(2000.0, 1e-6);
        assert!(h > 0.0 && h < 3e-6);
        let p = reflow_profile(2000.0, 1e-6).unwrap();
        assert!(p.heights().iter().all(|&z| z.is_finite() && z >= 0.0));
    }

    #[test]
    fn unit_selectivity_lowers_shape_uniformly() {
        let surface = RadialProfile::sample(1000.0, 1.0, |_| 0.0).unwrap();
        let mask = RadialProfile::sample(1000.0, 1.0, |r| 100.0 - r / 20.0).unwrap();
        let out = transfer_etch(&surface, &mask, 1.0, 150.0).unwrap();
        for (r, z) in out.substrate.radii().iter().zip(out.substrate.heights()) {
            assert_relative_eq!(*z, mask.height_at(*r) - 150.0, epsilon = 1e-12);
        }
        assert!(out.mask.heights().iter().all(|&t| t == 0.0));
    }

    #[test]
    fn zero_etch_is_identity() {
        let surface = RadialProfile::sample(100.0, 1.0, |r| r.sin()).unwrap();
        let mask = RadialProfile::sample(100.0, 1.0, |r| 5.0 + r.cos()).unwrap();
        let out = transfer_etch(&surface, &mask, 28.0, 0.0).unwrap();
        assert_eq!(out.substrate, surface);
        assert_eq!(out.mask, mask);
    }

    #[test]
    fn negative_etch_rejected() {
        let p = RadialProfile::sample(10.0, 1.0, |_| 0.0).unwrap();
        assert!(transfer_etch(&p, &p, 1.0, -1.0).is_err());
    }

    /// A consumed paraxial spherical mask t0 − r²/(2Rc) etched at selectivity
    /// s gives depth s(E − t0) + s r²/(2Rc), i.e. focal length Rc/(2s).
    #[test]
    fn consumed_spherical_mask_gives_scaled_parabola() {
        let rc = 6000.0;
        let t0 = 200.0;
        let mask = RadialProfile::sample(300.0, 1.0, |r| t0 - (rc - (rc * rc - r * r).sqrt())).unwrap();
        let flat = mask.map(|_, _| 0.0);
        let mut rmses = Vec::new();
        for s in [28.0, 14.0] {
            let out = transfer_etch(&flat, &mask, s, 250.0).unwrap();
            let fit = fit_parabola(&out.substrate, (0.0, 300.0)).unwrap();
            assert_relative_eq!(fit.focal_length_nm, rc / (2.0 * s), max_relative = 0.01);
            assert!(!fit.opens_upward);
            rmses.push(fit.rmse_nm);
        }
        // Shrinking window converges to an exact parabola.
        let out = transfer_etch(&flat, &mask, 28.0, 250.0).unwrap();
        let w: Vec<f64> = [300.0, 150.0, 75.0]
            .iter()
            .map(|&l| fit_parabola(&out.substrate, (0.0, l)).unwrap().rmse_nm)
            .collect();
        assert!(w[0] > w[1] && w[1] > w[2], "{w:?}");
    }

    #[test]
    fn default_pipeline_reaches_target_depth() {
        let res = process_pipeline(&EtchStack::default(), 2500.0, 5.0).unwrap();
        assert_relative_eq!(res.report.depth_nm, 5000.0, max_relative = 1e-9);
        assert_relative_eq!(res.report.diamond_etch_nm, 5000.0 / 28.0, max_relative = 1e-12);
        assert!(res.report.premature_termination);
        assert!(res.report.flat_top_radius_nm > 0.0);
        assert!(res.fit.rmse_nm < 50.0);
        assert_eq!(res.steps.len(), 4);
        assert_relative_eq!(res.report.mask_peak_nm, 200.0, epsilon = 1e-9);
    }

    #[test]
    fn blank_resist_is_flat_and_unfittable() {
        let stack = EtchStack {
            resist_thickness_nm: 0.0,
            ..EtchStack::default()
        };
        assert!(matches!(
            process_pipeline(&stack, 2500.0, 5.0),
            Err(FabError::UnboundedFocalLength)
        ));
    }

    #[test]
    fn invalid_stack_rejected() {
        let stack = EtchStack {
            selectivity_diamond_over_mask: 0.0,
            ..EtchStack::default()
        };
        assert!(matches!(process_pipeline(&stack, 2500.0, 5.0), Err(FabError::InvalidStack(_))));
    }

    fn arb_profiles() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (
            proptest::collection::vec(-50.0f64..50.0, 20),
            proptest::collection::vec(0.0f64..300.0, 20),
        )
    }

    proptest! {
        #[test]
        fn deeper_etch_never_raises_surface(
            (z, t) in arb_profiles(),
            s in 0.5f64..40.0,
            e1 in 0.0f64..400.0,
            extra in 0.0f64..400.0,
        ) {
            let radii: Vec<f64> = (0..20).map(|i| i as f64 * 10.0).collect();
            let surface = RadialProfile::new(radii.clone(), z).unwrap();
            let mask = RadialProfile::new(radii, t).unwrap();
            let a = transfer_etch(&surface, &mask, s, e1).unwrap().composite();
            let b = transfer_etch(&surface, &mask, s, e1 + extra).unwrap().composite();
            for (za, zb) in a.heights().iter().zip(b.heights()) {
                prop_assert!(zb <= za);
            }
        }

        #[test]
        fn consecutive_etches_compose(
            (z, t) in arb_profiles(),
            s in 0.5f64..40.0,
            e1 in 0.0f64..400.0,
            e2 in 0.0f64..400.0,
        ) {
            let radii: Vec<f64> = (0..20).map(|i| i as f64 * 10.0).collect();
            let surface = RadialProfile::new(radii.clone(), z).unwrap();
            let mask = RadialProfile::new(radii, t).unwrap();
            let once = transfer_etch(&surface, &mask, s, e1 + e2).unwrap();
            let first = transfer_etch(&surface, &mask, s, e1).unwrap();
            let twice = transfer_etch(&first.substrate, &first.mask, s, e2).unwrap();
            for (a, b) in once.substrate.heights().iter().zip(twice.substrate.heights()) {
                prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
            }
        }
    }
}
