//! Line-of-sight optical channel between ceiling LEDs and photodiode users.
//!
//! Gains follow the generalized Lambertian emitter model with an ideal
//! non-imaging concentrator at the receiver:
//!
//! ```text
//! h = (m + 1) A / (2 pi d^2) * G(psi) * cos^m(phi) * cos(psi)   if psi <= FOV
//! h = 0                                                          otherwise
//! ```

use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Optical front-end constants shared by every LED/photodiode pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceConstants {
    /// Receiver field-of-view semi-angle (degrees).
    pub fov_semi_angle: f64,
    /// LED semi-angle at half power (degrees).
    pub half_power_semi_angle: f64,
    /// Photodiode physical area (m^2).
    pub pd_area: f64,
    /// Concentrator refractive index.
    pub refractive_index: f64,
}

impl DeviceConstants {
    pub fn validate(&self) -> Result<()> {
        let in_open_quadrant = |a: f64| a > 0.0 && a < 90.0;
        if !in_open_quadrant(self.fov_semi_angle) {
            return Err(Error::InvalidConfig(format!(
                "fov_semi_angle must lie in (0, 90) degrees, got {}",
                self.fov_semi_angle
            )));
        }
        if !in_open_quadrant(self.half_power_semi_angle) {
            return Err(Error::InvalidConfig(format!(
                "half_power_semi_angle must lie in (0, 90) degrees, got {}",
                self.half_power_semi_angle
            )));
        }
        if !(self.pd_area > 0.0) {
            return Err(Error::InvalidConfig(format!("pd_area must be positive, got {}", self.pd_area)));
        }
        if !(self.refractive_index >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "refractive_index must be non-negative, got {}",
                self.refractive_index
            )));
        }
        Ok(())
    }
}

/// A point or direction in room coordinates (meters).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

pub type Position = Vec3;

impl Vec3 {
    pub const DOWN: Vec3 = Vec3 { x: 0.0, y: 0.0, z: -1.0 };
    pub const UP: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 1.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn normalized(self) -> Option<Vec3> {
        let n = self.norm();
        (n > 0.0 && n.is_finite()).then(|| self * (1.0 / n))
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// A transmitter or receiver: where it sits and which way it faces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mount {
    pub position: Position,
    /// Unit normal of the emitting or receiving surface.
    pub orientation: Vec3,
}

impl Mount {
    /// An LED facing straight down.
    pub fn ceiling(position: Position) -> Self {
        Self { position, orientation: Vec3::DOWN }
    }

    /// A photodiode facing straight up.
    pub fn upward(position: Position) -> Self {
        Self { position, orientation: Vec3::UP }
    }
}

/// Lambertian emission order `m = -ln 2 / ln(cos(half_power_semi_angle))`.
pub fn lambertian_order(half_power_semi_angle: f64) -> Result<f64> {
    let c = half_power_semi_angle.to_radians().cos();
    if !(half_power_semi_angle > 0.0 && half_power_semi_angle < 90.0) || !(c > 0.0 && c < 1.0) {
        return Err(Error::Domain(format!(
            "half-power semi-angle {half_power_semi_angle} deg gives cos = {c}; need 0 < cos < 1"
        )));
    }
    Ok(-std::f64::consts::LN_2 / c.ln())
}

/// Gain of the ideal optical concentrator at the given incidence angle (degrees).
pub fn concentrator_gain(incidence_angle: f64, constants: &DeviceConstants) -> f64 {
    if incidence_angle > constants.fov_semi_angle {
        return 0.0;
    }
    let s = constants.fov_semi_angle.to_radians().sin();
    constants.refractive_index * constants.refractive_index / (s * s)
}

/// LoS DC gain from one LED to one photodiode.
pub fn channel_gain(led: &Mount, user: &Mount, constants: &DeviceConstants) -> Result<f64> {
    let los = user.position - led.position;
    let d = los.norm();
    if d == 0.0 {
        let p = led.position;
        return Err(Error::ZeroDistance { x: p.x, y: p.y, z: p.z });
    }
    let dir = los * (1.0 / d);
    let cos_irradiance = dir.dot(led.orientation).clamp(-1.0, 1.0);
    let cos_incidence = (-dir).dot(user.orientation).clamp(-1.0, 1.0);
    // Receiver facing away or emitter pointing away: nothing arrives.
    if cos_irradiance <= 0.0 || cos_incidence < 0.0 {
        return Ok(0.0);
    }
    let incidence = cos_incidence.acos().to_degrees();
    let g = concentrator_gain(incidence, constants);
    if g == 0.0 {
        return Ok(0.0);
    }
    let m = lambertian_order(constants.half_power_semi_angle)?;
    Ok((m + 1.0) * constants.pd_area / (2.0 * PI * d * d) * g * cos_irradiance.powf(m) * cos_incidence)
}

/// K x N matrix of LoS gains; row `k` is user `k`'s channel vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelMatrix {
    n_users: usize,
    n_leds: usize,
    gains: Vec<f64>,
}

impl ChannelMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_users = rows.len();
        let n_leds = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != n_leds) {
            return Err(Error::DimensionMismatch { expected: n_leds, got: bad.len() });
        }
        if rows.iter().flatten().any(|g| !(*g >= 0.0) || !g.is_finite()) {
            return Err(Error::Domain("channel gains must be finite and non-negative".into()));
        }
        Ok(Self { n_users, n_leds, gains: rows.into_iter().flatten().collect() })
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_leds(&self) -> usize {
        self.n_leds
    }

    pub fn get(&self, user: usize, led: usize) -> f64 {
        self.gains[user * self.n_leds + led]
    }

    pub fn row(&self, user: usize) -> &[f64] {
        &self.gains[user * self.n_leds..(user + 1) * self.n_leds]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.gains.chunks(self.n_leds.max(1)).take(self.n_users)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.gains
    }
}

/// Evaluate [`channel_gain`] over every (user, LED) pair.
pub fn build_channel_matrix(leds: &[Mount], users: &[Mount], constants: &DeviceConstants) -> Result<ChannelMatrix> {
    let rows = users
        .iter()
        .map(|u| leds.iter().map(|l| channel_gain(l, u, constants)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    if users.is_empty() {
        return Ok(ChannelMatrix { n_users: 0, n_leds: leds.len(), gains: Vec::new() });
    }
    ChannelMatrix::from_rows(rows)
}
