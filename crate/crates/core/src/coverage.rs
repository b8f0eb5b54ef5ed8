//! Swath activation and coverage probability.
//!
//! A satellite senses the region of interest when every polygon vertex lies
//! within `R_swath` great-circle km of its sub-satellite point.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::constellation::{
    subsatellite_point, EcefPosition, GeodeticCoord, SatelliteId, EARTH_RADIUS_KM,
};
use crate::error::{Result, SimError};

#[derive(Debug, Clone, PartialEq)]
pub struct RegionOfInterest {
    pub name: String,
    pub vertices: Vec<GeodeticCoord>,
    pub centroid: GeodeticCoord,
    vertex_units: Vec<EcefPosition>,
    centroid_unit: EcefPosition,
    circumradius_rad: f64,
}

impl RegionOfInterest {
    pub fn new(name: impl Into<String>, vertices: Vec<GeodeticCoord>) -> Result<Self> {
        let name = name.into();
        if vertices.is_empty() {
            return Err(SimError::config(format!("RoI '{name}' has no vertices")));
        }
        for v in &vertices {
            v.validate()?;
        }
        let vertex_units: Vec<EcefPosition> = vertices.iter().map(|v| unit_vector(*v)).collect();
        let sum = vertex_units
            .iter()
            .fold(EcefPosition::default(), |acc, u| EcefPosition::new(acc.x + u.x, acc.y + u.y, acc.z + u.z));
        let centroid_unit = sum
            .unit()
            .map_err(|_| SimError::config(format!("RoI '{name}' has no defined centroid")))?;
        let centroid = subsatellite_point(centroid_unit)?;
        let circumradius_rad = vertex_units
            .iter()
            .map(|u| central_angle_units(centroid_unit, *u))
            .fold(0.0, f64::max);
        Ok(Self {
            name,
            vertices,
            centroid,
            vertex_units,
            centroid_unit,
            circumradius_rad,
        })
    }

    /// Largest great-circle distance from the centroid to a vertex, in km.
    pub fn circumradius_km(&self) -> f64 {
        self.circumradius_rad * EARTH_RADIUS_KM
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwathModel {
    pub radius_km: f64,
}

impl SwathModel {
    pub fn new(radius_km: f64) -> Result<Self> {
        if !(radius_km > 0.0) || !radius_km.is_finite() {
            return Err(SimError::config(format!("swath radius must be positive, got {radius_km}")));
        }
        Ok(Self { radius_km })
    }

    fn angle_rad(&self) -> f64 {
        self.radius_km / EARTH_RADIUS_KM
    }
}

/// Satellites able to image the whole RoI at one step, sorted by `(plane, slot)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveSet {
    pub time_s: f64,
    pub members: Vec<SatelliteId>,
}

impl ActiveSet {
    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

fn unit_vector(g: GeodeticCoord) -> EcefPosition {
    let (slat, clat) = g.lat_deg.to_radians().sin_cos();
    let (slon, clon) = g.lon_deg.to_radians().sin_cos();
    EcefPosition::new(clat * clon, clat * slon, slat)
}

// atan2(|a x b|, a . b) stays accurate near 0 and pi.
fn central_angle_units(a: EcefPosition, b: EcefPosition) -> f64 {
    a.cross(b).norm().atan2(a.dot(b))
}

/// Great-circle distance in km, which is exactly the radial distance of an
/// azimuthal equidistant projection centered at `center`.
pub fn azimuthal_equidistant_distance(center: GeodeticCoord, point: GeodeticCoord) -> f64 {
    EARTH_RADIUS_KM * central_angle_units(unit_vector(center), unit_vector(point))
}

pub fn is_active(sat_pos: EcefPosition, roi: &RegionOfInterest, swath: &SwathModel) -> Result<bool> {
    let center = subsatellite_point(sat_pos)?;
    Ok(roi
        .vertices
        .iter()
        .all(|v| azimuthal_equidistant_distance(center, *v) <= swath.radius_km))
}

/// All satellites (positions in flat index order) for which [`is_active`] holds.
pub fn active_set(
    time_s: f64,
    positions: &[EcefPosition],
    sats_per_plane: usize,
    roi: &RegionOfInterest,
    swath: &SwathModel,
) -> Result<ActiveSet> {
    // Triangle inequality: an active satellite is within swath + circumradius
    // of the centroid, so anything farther can be skipped cheaply.
    let reach = (swath.angle_rad() + roi.circumradius_rad + 1e-9).min(PI);
    let min_dot = reach.cos();
    let limit = swath.radius_km;
    let mut members = Vec::new();
    for (i, pos) in positions.iter().enumerate() {
        let u = pos.unit()?;
        if u.dot(roi.centroid_unit) < min_dot {
            continue;
        }
        let inside = roi
            .vertex_units
            .iter()
            .all(|v| EARTH_RADIUS_KM * central_angle_units(u, *v) <= limit);
        if inside {
            members.push(SatelliteId::from_flat(i, sats_per_plane));
        }
    }
    Ok(ActiveSet { time_s, members })
}

/// Running count of covered steps.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CoverageTally {
    pub covered_steps: usize,
    pub total_steps: usize,
}

impl CoverageTally {
    pub fn record(&mut self, active: &ActiveSet) {
        self.total_steps += 1;
        if !active.is_empty() {
            self.covered_steps += 1;
        }
    }

    pub fn probability(&self) -> Result<f64> {
        if self.total_steps == 0 {
            return Err(SimError::Empty("coverage probability"));
        }
        Ok(self.covered_steps as f64 / self.total_steps as f64)
    }
}

/// Fraction of steps `t_0..t_N` with a non-empty active set.
pub fn coverage_probability(active_sets: &[ActiveSet]) -> Result<f64> {
    let mut tally = CoverageTally::default();
    active_sets.iter().for_each(|a| tally.record(a));
    tally.probability()
}
