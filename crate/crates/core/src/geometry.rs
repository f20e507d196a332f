//! Coordinate conversions and the closed-form mapping between a hidden
//! scatterer and the sinusoid it traces in a circular confocal scan.
//!
//! A scan point on a circle of radius `r'` at angle `phi'` sees a scatterer at
//! spherical position `(r, theta, phi)` (relative to the circle center) at
//! squared distance
//!
//! ```text
//! v(phi') = gamma - alpha * cos(beta - phi')
//! alpha = 2 r r' sin(theta),  beta = phi,  gamma = r^2 + r'^2
//! ```

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of light in m/s.
pub const SPEED_OF_LIGHT: f64 = 3.0e8;

/// A point in meters. The relay wall is the plane `z = 0`; the hidden scene
/// lives in `z >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CartesianPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl CartesianPoint {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn sub(&self, other: &CartesianPoint) -> CartesianPoint {
        CartesianPoint::new(self.x - other.x, self.y - other.y, self.z - other.z)
    }

    pub fn add(&self, other: &CartesianPoint) -> CartesianPoint {
        CartesianPoint::new(self.x + other.x, self.y + other.y, self.z + other.z)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn norm_sq(&self) -> f64 {
        self.x * self.x + self.y * self.y + self.z * self.z
    }

    pub fn distance(&self, other: &CartesianPoint) -> f64 {
        self.sub(other).norm()
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

/// Spherical coordinates: radius `r`, zenith `theta` measured from the wall
/// normal, azimuth `phi` in the wall plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphericalPoint {
    pub r: f64,
    pub theta: f64,
    pub phi: f64,
}

impl SphericalPoint {
    pub const fn new(r: f64, theta: f64, phi: f64) -> Self {
        Self { r, theta, phi }
    }
}

/// Circular confocal scan path on the wall. Scan angles are `2 pi k / num_angles`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanCircle {
    pub radius: f64,
    pub center: CartesianPoint,
    pub num_angles: usize,
}

impl ScanCircle {
    pub fn new(radius: f64, center: CartesianPoint, num_angles: usize) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidInput(format!("scan radius must be positive, got {radius}")));
        }
        if center.z != 0.0 || !center.is_finite() {
            return Err(Error::InvalidInput("scan circle center must lie on the wall (z = 0)".into()));
        }
        if num_angles < 3 {
            return Err(Error::InvalidInput(format!("need at least 3 scan angles, got {num_angles}")));
        }
        Ok(Self { radius, center, num_angles })
    }

    /// Circle of the given radius centered at the wall origin.
    pub fn centered(radius: f64, num_angles: usize) -> Result<Self> {
        Self::new(radius, CartesianPoint::default(), num_angles)
    }

    pub fn angle_step(&self) -> f64 {
        TAU / self.num_angles as f64
    }

    pub fn angle(&self, k: usize) -> f64 {
        TAU * k as f64 / self.num_angles as f64
    }

    /// Wall point scanned at angle index `k`.
    pub fn point(&self, k: usize) -> CartesianPoint {
        let phi = self.angle(k);
        CartesianPoint::new(
            self.center.x + self.radius * phi.cos(),
            self.center.y + self.radius * phi.sin(),
            0.0,
        )
    }

    pub fn points(&self) -> impl Iterator<Item = CartesianPoint> + '_ {
        (0..self.num_angles).map(move |k| self.point(k))
    }

    /// Expresses a world point relative to the circle center.
    pub fn to_local(&self, p: &CartesianPoint) -> CartesianPoint {
        p.sub(&self.center)
    }

    pub fn to_world(&self, p: &CartesianPoint) -> CartesianPoint {
        p.add(&self.center)
    }
}

/// Parameters of `v(phi') = offset - amplitude * cos(phase - phi')`, in m^2
/// (amplitude, offset) and radians (phase).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinusoidParams {
    pub amplitude: f64,
    pub phase: f64,
    pub offset: f64,
}

impl SinusoidParams {
    pub const fn new(amplitude: f64, phase: f64, offset: f64) -> Self {
        Self { amplitude, phase, offset }
    }
}

/// Wraps an angle into `[0, 2 pi)`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Smallest absolute difference between two angles, in `[0, pi]`.
pub fn angle_distance(a: f64, b: f64) -> f64 {
    let d = wrap_angle(a - b);
    if d > PI {
        TAU - d
    } else {
        d
    }
}

pub fn spherical_to_cartesian(p: &SphericalPoint) -> CartesianPoint {
    let (st, ct) = p.theta.sin_cos();
    let (sp, cp) = p.phi.sin_cos();
    CartesianPoint::new(p.r * st * cp, p.r * st * sp, p.r * ct)
}

/// Inverse of [`spherical_to_cartesian`]. The azimuth of the origin and of
/// points on the wall normal is 0.
pub fn cartesian_to_spherical(p: &CartesianPoint) -> SphericalPoint {
    let r = p.norm();
    if r == 0.0 {
        return SphericalPoint::new(0.0, 0.0, 0.0);
    }
    let theta = (p.z / r).clamp(-1.0, 1.0).acos();
    let phi = if p.x == 0.0 && p.y == 0.0 {
        0.0
    } else {
        wrap_angle(p.y.atan2(p.x))
    };
    SphericalPoint::new(r, theta, phi)
}

/// Sinusoid traced by a scatterer given in spherical coordinates relative to
/// the circle center.
pub fn scatterer_to_sinusoid(p: &SphericalPoint, circle: &ScanCircle) -> SinusoidParams {
    let rp = circle.radius;
    SinusoidParams {
        amplitude: 2.0 * p.r * rp * p.theta.sin(),
        phase: wrap_angle(p.phi),
        offset: p.r * p.r + rp * rp,
    }
}

/// Sinusoid of a scatterer given in world coordinates.
pub fn point_to_sinusoid(p: &CartesianPoint, circle: &ScanCircle) -> SinusoidParams {
    scatterer_to_sinusoid(&cartesian_to_spherical(&circle.to_local(p)), circle)
}

/// Recovers the scatterer (relative to the circle center) that traces `s`.
pub fn sinusoid_to_scatterer(s: &SinusoidParams, circle: &ScanCircle) -> Result<SphericalPoint> {
    let rp = circle.radius;
    let invalid = || Error::InvalidSinusoid { alpha: s.amplitude, gamma: s.offset, radius: rp };
    if !(s.amplitude.is_finite() && s.offset.is_finite() && s.phase.is_finite()) {
        return Err(invalid());
    }
    let r_sq = s.offset - rp * rp;
    let tol = 1e-12 * s.offset.abs().max(1.0);
    if r_sq < -tol || s.amplitude < -tol {
        return Err(invalid());
    }
    let r = r_sq.max(0.0).sqrt();
    let max_alpha = 2.0 * r * rp;
    if s.amplitude > max_alpha + tol {
        return Err(invalid());
    }
    let theta = if max_alpha > 0.0 {
        (s.amplitude / max_alpha).clamp(0.0, 1.0).asin()
    } else {
        0.0
    };
    Ok(SphericalPoint::new(r, theta, wrap_angle(s.phase)))
}

/// World position of the scatterer that traces `s`.
pub fn sinusoid_to_point(s: &SinusoidParams, circle: &ScanCircle) -> Result<CartesianPoint> {
    let local = spherical_to_cartesian(&sinusoid_to_scatterer(s, circle)?);
    Ok(circle.to_world(&local))
}

/// Squared wall-to-scatterer distance seen from scan angle `phi_prime`.
pub fn sinusoid_value(s: &SinusoidParams, phi_prime: f64) -> f64 {
    s.offset - s.amplitude * (s.phase - phi_prime).cos()
}
