//! Walker shell generation and circular-orbit propagation into the
//! Earth-fixed frame.
//!
//! The Earth is a sphere of radius [`EARTH_RADIUS_KM`]. At `t = 0` the
//! Greenwich meridian coincides with the inertial x-axis.

use std::f64::consts::{PI, TAU};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

/// Mean Earth radius in km.
pub const EARTH_RADIUS_KM: f64 = 6371.0;
/// Earth gravitational parameter in km^3/s^2.
pub const EARTH_MU_KM3_S2: f64 = 398_600.441_8;
/// Sidereal rotation rate of the Earth in rad/s.
pub const EARTH_ROTATION_RAD_S: f64 = 7.292_115_9e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WalkerPattern {
    /// Planes spread over 360 degrees of RAAN.
    Delta,
    /// Planes spread over 180 degrees of RAAN, leaving a counter-rotating seam.
    Star,
}

impl fmt::Display for WalkerPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WalkerPattern::Delta => f.write_str("delta"),
            WalkerPattern::Star => f.write_str("star"),
        }
    }
}

/// One orbital shell: planes, satellites per plane, inclination, altitude,
/// minimum ground elevation, Walker pattern and phasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShellConfig {
    pub name: String,
    pub planes: usize,
    pub sats_per_plane: usize,
    pub inclination_deg: f64,
    pub altitude_km: f64,
    pub min_elevation_deg: f64,
    pub pattern: WalkerPattern,
    pub phasing: usize,
}

impl ShellConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |what: String| Err(SimError::config(format!("shell '{}': {what}", self.name)));
        if self.planes == 0 {
            return fail("planes must be at least 1".into());
        }
        if self.sats_per_plane == 0 {
            return fail("sats_per_plane must be at least 1".into());
        }
        if !(self.inclination_deg > 0.0 && self.inclination_deg < 180.0) {
            return fail(format!(
                "inclination_deg must lie in (0, 180), got {}",
                self.inclination_deg
            ));
        }
        if !(self.altitude_km > 0.0) || !self.altitude_km.is_finite() {
            return fail(format!("altitude_km must be positive, got {}", self.altitude_km));
        }
        if !(0.0..90.0).contains(&self.min_elevation_deg) {
            return fail(format!(
                "min_elevation_deg must lie in [0, 90), got {}",
                self.min_elevation_deg
            ));
        }
        if self.phasing >= self.planes {
            return fail(format!(
                "phasing must be smaller than planes ({}), got {}",
                self.planes, self.phasing
            ));
        }
        Ok(())
    }

    pub fn satellite_count(&self) -> usize {
        self.planes * self.sats_per_plane
    }

    pub fn semi_major_axis_km(&self) -> f64 {
        EARTH_RADIUS_KM + self.altitude_km
    }
}

/// Position of a satellite within its shell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SatelliteId {
    pub plane: usize,
    pub slot: usize,
}

impl SatelliteId {
    pub fn new(plane: usize, slot: usize) -> Self {
        Self { plane, slot }
    }

    pub fn flat_index(self, sats_per_plane: usize) -> usize {
        self.plane * sats_per_plane + self.slot
    }

    pub fn from_flat(index: usize, sats_per_plane: usize) -> Self {
        Self {
            plane: index / sats_per_plane,
            slot: index % sats_per_plane,
        }
    }
}

impl fmt::Display for SatelliteId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "sat-{}-{}", self.plane, self.slot)
    }
}

/// Circular-orbit elements. Eccentricity is zero by construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrbitalElements {
    pub raan: f64,
    pub arg_latitude_epoch: f64,
    pub inclination: f64,
    pub semi_major_axis_km: f64,
    pub mean_motion: f64,
}

impl OrbitalElements {
    pub fn circular(raan: f64, arg_latitude_epoch: f64, inclination: f64, semi_major_axis_km: f64) -> Self {
        Self {
            raan,
            arg_latitude_epoch,
            inclination,
            semi_major_axis_km,
            mean_motion: (EARTH_MU_KM3_S2 / semi_major_axis_km.powi(3)).sqrt(),
        }
    }

    pub fn period_s(&self) -> f64 {
        TAU / self.mean_motion
    }
}

/// Cartesian position in km. Used for both the inertial and the Earth-fixed
/// frame; the propagator only ever hands out Earth-fixed values.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EcefPosition {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl EcefPosition {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn dot(self, o: Self) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Self) -> Self {
        Self::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn minus(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }

    pub fn scale(self, k: f64) -> Self {
        Self::new(self.x * k, self.y * k, self.z * k)
    }

    pub fn distance(self, o: Self) -> f64 {
        self.minus(o).norm()
    }

    pub fn unit(self) -> Result<Self> {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(SimError::ZeroVector);
        }
        Ok(self.scale(1.0 / n))
    }

    /// Rotates about the z-axis by `angle` radians (right-handed).
    pub fn rotate_z(self, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self::new(c * self.x - s * self.y, s * self.x + c * self.y, self.z)
    }
}

/// Latitude and longitude in degrees on the spherical Earth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeodeticCoord {
    pub lat_deg: f64,
    pub lon_deg: f64,
}

impl GeodeticCoord {
    pub fn new(lat_deg: f64, lon_deg: f64) -> Result<Self> {
        let g = Self { lat_deg, lon_deg };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(-90.0..=90.0).contains(&self.lat_deg) || !(-180.0..=180.0).contains(&self.lon_deg) {
            return Err(SimError::config(format!(
                "coordinate ({}, {}) out of range",
                self.lat_deg, self.lon_deg
            )));
        }
        Ok(())
    }
}

/// Discretized simulation horizon `t_i = i * step` for `i` in `0..=N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimClock {
    horizon_s: f64,
    step_s: f64,
    step_count: usize,
}

impl SimClock {
    pub fn new(horizon_s: f64, step_s: f64) -> Result<Self> {
        if !(step_s > 0.0) || !step_s.is_finite() {
            return Err(SimError::config(format!("step must be positive, got {step_s}")));
        }
        if !(horizon_s >= step_s) || !horizon_s.is_finite() {
            return Err(SimError::config(format!(
                "horizon ({horizon_s}) must be at least one step ({step_s})"
            )));
        }
        // Guard against 86400/30 style ratios landing a hair below an integer.
        let ratio = horizon_s / step_s;
        let mut step_count = ratio.floor() as usize;
        if ((step_count + 1) as f64 - ratio).abs() < 1e-9 {
            step_count += 1;
        }
        Ok(Self {
            horizon_s,
            step_s,
            step_count,
        })
    }

    pub fn horizon_s(&self) -> f64 {
        self.horizon_s
    }

    pub fn step_s(&self) -> f64 {
        self.step_s
    }

    /// `N`; there are `N + 1` timestamps.
    pub fn step_count(&self) -> usize {
        self.step_count
    }

    pub fn time_at(&self, i: usize) -> f64 {
        i as f64 * self.step_s
    }

    pub fn timestamps(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.step_count).map(move |i| self.time_at(i))
    }
}

/// Lays out the `P * R` satellites of a Walker shell.
///
/// RAAN of plane `p` is `p * 360/P` (Delta) or `p * 180/P` (Star); slot `s`
/// of plane `p` starts at argument of latitude `s * 360/R + p * F * 360/(P*R)`.
pub fn build_walker(cfg: &ShellConfig) -> Result<Vec<(SatelliteId, OrbitalElements)>> {
    cfg.validate()?;
    let planes = cfg.planes as f64;
    let per_plane = cfg.sats_per_plane as f64;
    let raan_spread = match cfg.pattern {
        WalkerPattern::Delta => TAU,
        WalkerPattern::Star => PI,
    };
    let a = cfg.semi_major_axis_km();
    let inc = cfg.inclination_deg.to_radians();
    let phase_unit = TAU / (planes * per_plane);

    let mut out = Vec::with_capacity(cfg.satellite_count());
    for p in 0..cfg.planes {
        let raan = p as f64 * raan_spread / planes;
        for s in 0..cfg.sats_per_plane {
            let u0 = s as f64 * TAU / per_plane + (p * cfg.phasing) as f64 * phase_unit;
            out.push((
                SatelliteId::new(p, s),
                OrbitalElements::circular(raan, u0.rem_euclid(TAU), inc, a),
            ));
        }
    }
    Ok(out)
}

/// Position in the Earth-centered inertial frame at time `t`.
pub fn propagate_inertial(elem: &OrbitalElements, t: f64) -> EcefPosition {
    let u = elem.arg_latitude_epoch + elem.mean_motion * t;
    let (su, cu) = u.sin_cos();
    let (so, co) = elem.raan.sin_cos();
    let (si, ci) = elem.inclination.sin_cos();
    let a = elem.semi_major_axis_km;
    EcefPosition::new(
        a * (co * cu - so * su * ci),
        a * (so * cu + co * su * ci),
        a * (su * si),
    )
}

/// Earth-fixed position at time `t` seconds after epoch.
pub fn propagate(elem: &OrbitalElements, t: f64) -> EcefPosition {
    propagate_inertial(elem, t).rotate_z(-EARTH_ROTATION_RAD_S * t)
}

/// Spherical sub-satellite point. At the poles the longitude is `atan2(0, 0) = 0`.
pub fn subsatellite_point(pos: EcefPosition) -> Result<GeodeticCoord> {
    let r = pos.norm();
    if r == 0.0 || !r.is_finite() {
        return Err(SimError::ZeroVector);
    }
    let lat = (pos.z / r).clamp(-1.0, 1.0).asin().to_degrees();
    let lon = pos.y.atan2(pos.x).to_degrees();
    Ok(GeodeticCoord {
        lat_deg: lat,
        lon_deg: lon,
    })
}

pub fn geodetic_to_ecef(g: GeodeticCoord, altitude_km: f64) -> EcefPosition {
    let r = EARTH_RADIUS_KM + altitude_km;
    let (slat, clat) = g.lat_deg.to_radians().sin_cos();
    let (slon, clon) = g.lon_deg.to_radians().sin_cos();
    EcefPosition::new(r * clat * clon, r * clat * slon, r * slat)
}
