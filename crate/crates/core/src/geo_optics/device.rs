//! Reflector geometry shared by the ray tracer and the FDTD rasterizer.
//!
//! Coordinates are in nanometres with `z` pointing from the substrate towards
//! the apex. The apex sits at the origin, the paraboloid wall follows
//! `depth(r) = r² / 4f` below it, and the emitter focus lies at `(0, 0, -f)`.
//! The mouth of the paraboloid at depth `h` joins a diamond substrate slab of
//! finite thickness whose lower face is the collection facet.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::GeoError;

/// Offset below which a ray-surface root is treated as the ray origin itself.
pub(crate) const SELF_HIT_EPS_NM: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParaboloidDevice {
    /// Focal length `f` of the paraboloid, equal to the emitter depth below the apex.
    pub focal_length_nm: f64,
    /// Height `h` of the reflector from apex to mouth. Zero describes an
    /// unpatterned chip whose top facet is a plane at `z = 0`.
    pub height_um: f64,
    pub n_diamond: f64,
    /// Index above the device and around the reflector wall.
    pub n_top: f64,
    /// Index of the collection medium below the substrate (air or immersion oil).
    pub n_bottom: f64,
    pub substrate_thickness_um: f64,
}

impl Default for ParaboloidDevice {
    fn default() -> Self {
        Self {
            focal_length_nm: 100.0,
            height_um: 5.0,
            n_diamond: 2.4,
            n_top: 1.0,
            n_bottom: 1.518,
            substrate_thickness_um: 50.0,
        }
    }
}

/// Which interface a ray met.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurfaceTag {
    /// Flat diamond face looking into the top medium: the etched field around
    /// the mouth, or the whole top plane of an unpatterned chip.
    TopFacet,
    ParaboloidWall,
    BottomFacet,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceHit {
    pub distance: f64,
    pub point: Vector3<f64>,
    /// Unit normal pointing out of the diamond.
    pub outward_normal: Vector3<f64>,
    pub surface: SurfaceTag,
}

impl ParaboloidDevice {
    /// An unpatterned chip with the emitter `depth_nm` below a flat top facet.
    pub fn unpatterned(depth_nm: f64, n_bottom: f64) -> Self {
        Self {
            focal_length_nm: depth_nm,
            height_um: 0.0,
            n_bottom,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), GeoError> {
        let finite = [
            self.focal_length_nm,
            self.height_um,
            self.n_diamond,
            self.n_top,
            self.n_bottom,
            self.substrate_thickness_um,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(GeoError::InvalidDevice("non-finite parameter".into()));
        }
        if self.focal_length_nm <= 0.0 {
            return Err(GeoError::InvalidDevice(format!(
                "focal length must be positive, got {} nm",
                self.focal_length_nm
            )));
        }
        if self.height_um < 0.0 || (self.height_um > 0.0 && self.height_nm() <= self.focal_length_nm) {
            return Err(GeoError::InvalidDevice(format!(
                "height {} um must exceed the focal length {} nm (or be zero for a flat chip)",
                self.height_um, self.focal_length_nm
            )));
        }
        if self.n_top <= 0.0 || self.n_bottom <= 0.0 {
            return Err(GeoError::InvalidDevice("refractive indices must be positive".into()));
        }
        if self.n_diamond <= self.n_top || self.n_diamond <= self.n_bottom {
            return Err(GeoError::InvalidDevice(format!(
                "host index {} must exceed top {} and bottom {} indices",
                self.n_diamond, self.n_top, self.n_bottom
            )));
        }
        if self.substrate_thickness_um <= 0.0 {
            return Err(GeoError::InvalidDevice("substrate thickness must be positive".into()));
        }
        Ok(())
    }

    pub fn is_planar(&self) -> bool {
        self.height_um == 0.0
    }

    pub fn height_nm(&self) -> f64 {
        self.height_um * 1e3
    }

    pub fn mouth_radius_nm(&self) -> f64 {
        (4.0 * self.focal_length_nm * self.height_nm()).sqrt()
    }

    pub fn focus(&self) -> Vector3<f64> {
        Vector3::new(0.0, 0.0, -self.focal_length_nm)
    }

    /// z coordinate of the lower substrate face.
    pub fn bottom_z_nm(&self) -> f64 {
        -self.height_nm() - self.substrate_thickness_um * 1e3
    }

    /// Depth of the paraboloid wall below the apex at radius `r`.
    pub fn wall_depth(&self, r: f64) -> f64 {
        r * r / (4.0 * self.focal_length_nm)
    }

    /// Point lies in the reflector body above the mouth plane.
    pub fn in_body(&self, p: &Vector3<f64>) -> bool {
        let h = self.height_nm();
        p.z <= 0.0 && p.z >= -h && p.x * p.x + p.y * p.y + 4.0 * self.focal_length_nm * p.z <= 0.0
    }

    /// Point lies in diamond, with a tolerance for points sitting on a surface.
    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        let tol = 1e-6;
        let h = self.height_nm();
        let in_substrate = p.z <= -h + tol && p.z >= self.bottom_z_nm() - tol;
        let in_body = !self.is_planar()
            && p.z <= tol
            && p.z >= -h - tol
            && p.x * p.x + p.y * p.y + 4.0 * self.focal_length_nm * p.z
                <= tol * (1.0 + 4.0 * self.focal_length_nm);
        in_substrate || in_body
    }

    /// Nearest forward intersection of a ray travelling inside the diamond.
    ///
    /// Returns `None` only when the ray never meets a surface, which happens
    /// for rays running exactly parallel to the unbounded substrate faces.
    pub fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<SurfaceHit> {
        let mut best: Option<(f64, SurfaceTag)> = None;
        let mut consider = |t: f64, tag: SurfaceTag| {
            if t > SELF_HIT_EPS_NM && best.is_none_or(|(bt, _)| t < bt) {
                best = Some((t, tag));
            }
        };

        let h = self.height_nm();
        let f = self.focal_length_nm;
        if !self.is_planar() {
            let a = dir.x * dir.x + dir.y * dir.y;
            let b = 2.0 * (origin.x * dir.x + origin.y * dir.y) + 4.0 * f * dir.z;
            let c = origin.x * origin.x + origin.y * origin.y + 4.0 * f * origin.z;
            for t in quadratic_roots(a, b, c).into_iter().flatten() {
                let z = origin.z + t * dir.z;
                if (-h..=0.0).contains(&z) {
                    consider(t, SurfaceTag::ParaboloidWall);
                }
            }
        }

        let top_z = -h;
        if dir.z > 0.0 && origin.z < top_z {
            let t = (top_z - origin.z) / dir.z;
            let p = origin + dir * t;
            let r2 = p.x * p.x + p.y * p.y;
            if self.is_planar() || r2 >= 4.0 * f * h {
                consider(t, SurfaceTag::TopFacet);
            }
        }

        let bottom_z = self.bottom_z_nm();
        if dir.z < 0.0 {
            consider((bottom_z - origin.z) / dir.z, SurfaceTag::BottomFacet);
        }

        best.map(|(t, surface)| {
            let point = origin + dir * t;
            let outward_normal = match surface {
                SurfaceTag::ParaboloidWall => {
                    Vector3::new(2.0 * point.x, 2.0 * point.y, 4.0 * f).normalize()
                }
                SurfaceTag::TopFacet => Vector3::z(),
                SurfaceTag::BottomFacet => -Vector3::z(),
            };
            SurfaceHit {
                distance: t,
                point,
                outward_normal,
                surface,
            }
        })
    }

    /// Index of the medium on the far side of `surface`.
    pub fn exterior_index(&self, surface: SurfaceTag) -> f64 {
        match surface {
            SurfaceTag::TopFacet | SurfaceTag::ParaboloidWall => self.n_top,
            SurfaceTag::BottomFacet => self.n_bottom,
        }
    }
}

/// Real roots of `a t² + b t + c = 0`, computed without cancellation.
fn quadratic_roots(a: f64, b: f64, c: f64) -> [Option<f64>; 2] {
    let scale = a.abs().max(b.abs()).max(c.abs());
    if scale == 0.0 {
        return [None, None];
    }
    if a.abs() <= 1e-14 * scale {
        if b == 0.0 {
            return [None, None];
        }
        return [Some(-c / b), None];
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return [None, None];
    }
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    if q == 0.0 {
        return [Some(0.0), None];
    }
    [Some(q / a), Some(c / q)]
}

/// Checked wrapper used by the public intersection operation.
pub fn paraboloid_intersect(
    origin: &Vector3<f64>,
    direction: &Vector3<f64>,
    device: &ParaboloidDevice,
) -> Result<Option<SurfaceHit>, GeoError> {
    if !device.contains(origin) {
        return Err(GeoError::OutsideDevice {
            x: origin.x,
            y: origin.y,
            z: origin.z,
        });
    }
    Ok(device.intersect(origin, &direction.normalize()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn design_device() -> ParaboloidDevice {
        ParaboloidDevice::default()
    }

    #[test]
    fn axis_ray_hits_apex_with_vertical_normal() {
        let d = design_device();
        let hit = paraboloid_intersect(&d.focus(), &Vector3::z(), &d).unwrap().unwrap();
        assert_eq!(hit.surface, SurfaceTag::ParaboloidWall);
        assert_relative_eq!(hit.point.z, 0.0, epsilon = 1e-9);
        assert_relative_eq!(hit.outward_normal.z, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn horizontal_ray_from_focus_hits_latus_rectum() {
        let d = design_device();
        let hit = d.intersect(&d.focus(), &Vector3::x()).unwrap();
        assert_relative_eq!(hit.point.x, 2.0 * d.focal_length_nm, epsilon = 1e-9);
        let angle = hit.outward_normal.dot(&Vector3::z()).acos();
        assert_relative_eq!(angle, std::f64::consts::FRAC_PI_4, epsilon = 1e-12);
    }

    #[test]
    fn downward_ray_reaches_bottom_facet() {
        let d = design_device();
        let hit = d.intersect(&d.focus(), &-Vector3::z()).unwrap();
        assert_eq!(hit.surface, SurfaceTag::BottomFacet);
        assert_relative_eq!(hit.point.z, d.bottom_z_nm(), epsilon = 1e-9);
    }

    #[test]
    fn substrate_ray_outside_mouth_hits_top_facet() {
        let d = design_device();
        let origin = Vector3::new(3000.0, 0.0, -d.height_nm() - 1000.0);
        let hit = d.intersect(&origin, &Vector3::z()).unwrap();
        assert_eq!(hit.surface, SurfaceTag::TopFacet);
        assert_relative_eq!(hit.point.z, -d.height_nm(), epsilon = 1e-9);
    }

    #[test]
    fn substrate_ray_inside_mouth_continues_to_wall() {
        let d = design_device();
        let origin = Vector3::new(500.0, 0.0, -d.height_nm() - 1000.0);
        let hit = d.intersect(&origin, &Vector3::z()).unwrap();
        assert_eq!(hit.surface, SurfaceTag::ParaboloidWall);
        assert_relative_eq!(hit.point.z, -d.wall_depth(500.0), epsilon = 1e-9);
    }

    #[test]
    fn planar_chip_has_flat_top() {
        let d = ParaboloidDevice::unpatterned(100.0, 1.518);
        d.validate().unwrap();
        let dir = Vector3::new(1.0, 0.0, 1.0).normalize();
        let hit = d.intersect(&d.focus(), &dir).unwrap();
        assert_eq!(hit.surface, SurfaceTag::TopFacet);
        assert_relative_eq!(hit.point.x, 100.0, epsilon = 1e-9);
    }

    #[test]
    fn origin_outside_is_rejected() {
        let d = design_device();
        let outside = Vector3::new(5000.0, 0.0, -10.0);
        assert!(matches!(
            paraboloid_intersect(&outside, &Vector3::z(), &d),
            Err(GeoError::OutsideDevice { .. })
        ));
    }

    #[test]
    fn invalid_geometry_is_rejected() {
        let mut d = design_device();
        d.height_um = 0.05;
        assert!(d.validate().is_err());
        let mut d = design_device();
        d.n_bottom = 2.5;
        assert!(d.validate().is_err());
    }
}
