//! Deterministic-splitting ray tracer for the reflector.
//!
//! At every interface the ray's polarization is split into s and p parts
//! relative to the plane of incidence. The transmitted branch always leaves
//! the diamond and is logged as an [`ExitRecord`]; the reflected branch keeps
//! propagating until it drops below the weight floor or exhausts its bounce
//! budget.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::device::{ParaboloidDevice, SurfaceTag};
use super::fresnel::reflectances;
use super::source::Ray;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitSurface {
    TopFacet,
    ParaboloidWall,
    BottomFacet,
    LostMaxBounce,
}

impl From<SurfaceTag> for ExitSurface {
    fn from(tag: SurfaceTag) -> Self {
        match tag {
            SurfaceTag::TopFacet => ExitSurface::TopFacet,
            SurfaceTag::ParaboloidWall => ExitSurface::ParaboloidWall,
            SurfaceTag::BottomFacet => ExitSurface::BottomFacet,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExitRecord {
    pub exit_surface: ExitSurface,
    pub direction_in_exit_medium: Vector3<f64>,
    pub power_weight: f64,
    /// `n sin θ` of the exiting ray, invariant across the facet.
    pub numerical_aperture: f64,
}

/// How the lower substrate facet is treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BottomFacetModel {
    /// Fresnel reflection and refraction into the collection medium.
    #[default]
    Fresnel,
    /// Every ray reaching the facet leaves without reflection loss.
    Ideal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TraceOptions {
    pub max_bounces: u32,
    /// Branches weaker than this fraction of the launched weight stop.
    pub min_weight: f64,
    pub bottom_facet: BottomFacetModel,
}

impl Default for TraceOptions {
    fn default() -> Self {
        Self {
            max_bounces: 50,
            min_weight: 1e-4,
            bottom_facet: BottomFacetModel::Fresnel,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TraceOutcome {
    pub records: Vec<ExitRecord>,
    /// Weight of reflected branches terminated below the weight floor.
    pub residual: f64,
}

impl TraceOutcome {
    pub fn accounted_weight(&self) -> f64 {
        self.records.iter().map(|r| r.power_weight).sum::<f64>() + self.residual
    }
}

/// Traces one ray to completion.
pub fn trace_ray(ray: &Ray, device: &ParaboloidDevice, opts: &TraceOptions) -> TraceOutcome {
    let mut out = TraceOutcome::default();
    trace_into(ray, device, opts, &mut out);
    out
}

pub(crate) fn trace_into(
    ray: &Ray,
    device: &ParaboloidDevice,
    opts: &TraceOptions,
    out: &mut TraceOutcome,
) {
    let floor = opts.min_weight * ray.power_weight;
    let n1 = device.n_diamond;
    let mut current = *ray;
    loop {
        if current.bounce_count >= opts.max_bounces {
            out.records.push(lost(&current));
            return;
        }
        let Some(hit) = device.intersect(&current.origin, &current.direction) else {
            out.records.push(lost(&current));
            return;
        };
        let n2 = device.exterior_index(hit.surface);
        let d = current.direction;
        let normal = hit.outward_normal;
        let cos_i = d.dot(&normal).clamp(0.0, 1.0);

        if hit.surface == SurfaceTag::BottomFacet && opts.bottom_facet == BottomFacetModel::Ideal {
            let dir = refract(&d, &normal, n1 / n2, cos_i).unwrap_or(d);
            out.records.push(ExitRecord {
                exit_surface: ExitSurface::BottomFacet,
                direction_in_exit_medium: dir,
                power_weight: current.power_weight,
                numerical_aperture: n1 * transverse(&d),
            });
            return;
        }

        let s_hat = {
            let c = d.cross(&normal);
            let norm = c.norm();
            if norm > 1e-12 {
                c / norm
            } else {
                // Normal incidence: s and p are degenerate, align s with the field.
                current.polarization
            }
        };
        let w_s = current.polarization.dot(&s_hat).powi(2).min(1.0);
        let w_p = 1.0 - w_s;
        let (rs, rp) = reflectances(n1, n2, cos_i);
        let reflectance = (w_s * rs + w_p * rp).clamp(0.0, 1.0);
        let transmittance = 1.0 - reflectance;

        if transmittance > 0.0 {
            if let Some(dt) = refract(&d, &normal, n1 / n2, cos_i) {
                out.records.push(ExitRecord {
                    exit_surface: hit.surface.into(),
                    direction_in_exit_medium: dt,
                    power_weight: current.power_weight * transmittance,
                    numerical_aperture: n1 * transverse(&d),
                });
            }
        }

        let reflected_weight = current.power_weight * reflectance;
        if reflected_weight <= 0.0 {
            return;
        }
        if reflected_weight < floor {
            out.residual += reflected_weight;
            return;
        }
        let dr = (d - normal * (2.0 * cos_i)).normalize();
        let pol = split_polarization(&s_hat, &dr, w_s * rs, w_p * rp);
        current = Ray {
            origin: hit.point,
            direction: dr,
            power_weight: reflected_weight,
            polarization: pol,
            medium_index: n1,
            bounce_count: current.bounce_count + 1,
        };
    }
}

fn lost(ray: &Ray) -> ExitRecord {
    ExitRecord {
        exit_surface: ExitSurface::LostMaxBounce,
        direction_in_exit_medium: ray.direction,
        power_weight: ray.power_weight,
        numerical_aperture: ray.medium_index * transverse(&ray.direction),
    }
}

#[inline]
fn transverse(d: &Vector3<f64>) -> f64 {
    (d.x * d.x + d.y * d.y).sqrt()
}

/// Snell refraction through a surface with outward normal `n`; `eta = n1/n2`.
fn refract(d: &Vector3<f64>, n: &Vector3<f64>, eta: f64, cos_i: f64) -> Option<Vector3<f64>> {
    let sin_t2 = eta * eta * (1.0 - cos_i * cos_i);
    if sin_t2 >= 1.0 {
        return None;
    }
    let cos_t = (1.0 - sin_t2).sqrt();
    Some((d * eta - n * (eta * cos_i - cos_t)).normalize())
}

/// Field direction after an interface, from the s and p power fractions kept.
fn split_polarization(
    s_hat: &Vector3<f64>,
    dir: &Vector3<f64>,
    s_power: f64,
    p_power: f64,
) -> Vector3<f64> {
    let p_hat = s_hat.cross(dir);
    let v = s_hat * s_power.max(0.0).sqrt() + p_hat * p_power.max(0.0).sqrt();
    let norm = v.norm();
    if norm > 0.0 {
        v / norm
    } else {
        *s_hat
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo_optics::source::sample_dipole_rays;
    use crate::geo_optics::DipoleSource;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn focus_ray(device: &ParaboloidDevice, dir: Vector3<f64>, pol: Vector3<f64>) -> Ray {
        Ray {
            origin: device.focus(),
            direction: dir.normalize(),
            power_weight: 1.0,
            polarization: pol.normalize(),
            medium_index: device.n_diamond,
            bounce_count: 0,
        }
    }

    fn air_bottom() -> ParaboloidDevice {
        ParaboloidDevice {
            n_bottom: 1.0,
            ..ParaboloidDevice::default()
        }
    }

    #[test]
    fn sideways_ray_totally_reflects_then_exits_bottom() {
        let device = air_bottom();
        let ray = focus_ray(&device, Vector3::x(), Vector3::y());
        let out = trace_ray(&ray, &device, &TraceOptions::default());
        let first = out.records[0];
        assert_eq!(first.exit_surface, ExitSurface::BottomFacet);
        let t_normal = 1.0 - (1.4f64 / 3.4).powi(2);
        assert_relative_eq!(first.power_weight, t_normal, epsilon = 1e-9);
        assert_relative_eq!(first.direction_in_exit_medium.z, -1.0, epsilon = 1e-9);
        assert_relative_eq!(out.accounted_weight(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn axial_ray_partially_reflects_at_apex() {
        let device = ParaboloidDevice::default();
        let ray = focus_ray(&device, Vector3::z(), Vector3::x());
        let out = trace_ray(&ray, &device, &TraceOptions::default());
        let first = out.records[0];
        assert_eq!(first.exit_surface, ExitSurface::ParaboloidWall);
        assert_relative_eq!(first.power_weight, 1.0 - 0.169_550_173, epsilon = 1e-8);
    }

    #[test]
    fn high_floor_allows_single_split() {
        let device = air_bottom();
        let opts = TraceOptions {
            min_weight: 0.5,
            ..TraceOptions::default()
        };
        let ray = focus_ray(&device, Vector3::new(1.0, 0.2, -0.6), Vector3::new(0.0, 1.0, 0.0));
        let ray = Ray {
            polarization: (ray.polarization - ray.direction * ray.direction.dot(&ray.polarization))
                .normalize(),
            ..ray
        };
        let out = trace_ray(&ray, &device, &opts);
        let exits = out
            .records
            .iter()
            .filter(|r| r.exit_surface != ExitSurface::LostMaxBounce)
            .count();
        assert!(exits <= 2, "{exits} exits");
        assert_relative_eq!(out.accounted_weight(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn trapped_slab_ray_hits_bounce_limit() {
        let device = ParaboloidDevice::unpatterned(100.0, 1.0);
        let ray = focus_ray(&device, Vector3::new(1.0, 0.0, -0.5), Vector3::y());
        let out = trace_ray(&ray, &device, &TraceOptions::default());
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.records[0].exit_surface, ExitSurface::LostMaxBounce);
        assert_relative_eq!(out.records[0].power_weight, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn ideal_bottom_has_no_reflection() {
        let device = air_bottom();
        let opts = TraceOptions {
            bottom_facet: BottomFacetModel::Ideal,
            ..TraceOptions::default()
        };
        let ray = focus_ray(&device, -Vector3::z(), Vector3::x());
        let out = trace_ray(&ray, &device, &opts);
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.records[0].power_weight, 1.0);
    }

    /// The focal property: any wall reflection of a ray leaving the exact
    /// focus travels antiparallel to the axis.
    #[test]
    fn wall_reflection_from_focus_is_axial() {
        let device = ParaboloidDevice::default();
        for k in 0..=400 {
            let theta = 1e-3 + (std::f64::consts::PI - 0.6) * k as f64 / 400.0;
            for phi in [0.0, 0.7, 2.5, 4.0] {
                let d = Vector3::new(theta.sin() * f64::cos(phi), theta.sin() * f64::sin(phi), theta.cos());
                let hit = device.intersect(&device.focus(), &d).unwrap();
                if hit.surface != SurfaceTag::ParaboloidWall {
                    continue;
                }
                let n = hit.outward_normal;
                let r = d - n * (2.0 * d.dot(&n));
                let angle = r.normalize().dot(&-Vector3::z()).clamp(-1.0, 1.0).acos();
                assert!(angle < 1e-9, "theta={theta} phi={phi} deviation={angle}");
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn every_ray_conserves_power(seed in 0u64..10_000, ox in -0.5f64..0.5, oz in -0.5f64..0.5, bottom in 1.0f64..2.0) {
            let device = ParaboloidDevice { n_bottom: bottom, ..ParaboloidDevice::default() };
            let source = DipoleSource { orientation: [ox, 0.3, oz + 0.01], ..DipoleSource::perpendicular() };
            let rays = sample_dipole_rays(&source, 64, seed).unwrap();
            let opts = TraceOptions { min_weight: 1e-3, ..TraceOptions::default() };
            for mut ray in rays {
                ray.origin = device.focus();
                ray.power_weight = 1.0;
                let out = trace_ray(&ray, &device, &opts);
                prop_assert!((out.accounted_weight() - 1.0).abs() < 1e-9);
            }
        }
    }
}
