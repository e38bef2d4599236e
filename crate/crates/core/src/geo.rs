//! Spherical distances and a uniform-grid spatial index.
//!
//! Distances use the haversine formula on a sphere of radius [`EARTH_RADIUS_M`].
//! The index buckets items into fixed 0.01° cells and answers radius queries by
//! scanning every cell that intersects the query's bounding box, then filtering
//! candidates by exact distance. Cells do not wrap at ±180° longitude, so a query
//! circle that crosses the antimeridian misses items on the far side.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::par::Exec;

/// Mean Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Edge length of an index cell, in degrees.
pub const CELL_SIZE_DEG: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeoError {
    #[error("latitude {0} outside [-90, 90]")]
    Latitude(f64),
    #[error("longitude {0} outside [-180, 180]")]
    Longitude(f64),
    #[error("radius {0} must be a non-negative number of meters")]
    Radius(f64),
}

/// A WGS84-style coordinate in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPoint")]
pub struct GeoPoint {
    lat: f64,
    lon: f64,
}

#[derive(Deserialize)]
struct RawPoint {
    lat: f64,
    lon: f64,
}

impl TryFrom<RawPoint> for GeoPoint {
    type Error = GeoError;

    fn try_from(raw: RawPoint) -> Result<Self, Self::Error> {
        GeoPoint::new(raw.lat, raw.lon)
    }
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self, GeoError> {
        if !(-90.0..=90.0).contains(&lat) {
            return Err(GeoError::Latitude(lat));
        }
        if !(-180.0..=180.0).contains(&lon) {
            return Err(GeoError::Longitude(lon));
        }
        Ok(Self { lat, lon })
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }
}

/// Great-circle distance in meters.
pub fn haversine_distance(a: GeoPoint, b: GeoPoint) -> f64 {
    let phi1 = a.lat.to_radians();
    let phi2 = b.lat.to_radians();
    let dphi = phi2 - phi1;
    let dlambda = (b.lon - a.lon).to_radians();

    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    // rounding can push h a hair past 1 for antipodal points
    2.0 * EARTH_RADIUS_M * h.clamp(0.0, 1.0).sqrt().asin()
}

type CellKey = (i32, i32);

fn cell_of(p: GeoPoint) -> CellKey {
    (
        (p.lat / CELL_SIZE_DEG).floor() as i32,
        (p.lon / CELL_SIZE_DEG).floor() as i32,
    )
}

/// Grid index from item id to location.
///
/// The index is a plain value; wrap it in a lock to share it between readers and
/// a writer.
#[derive(Debug, Clone, Default)]
pub struct SpatialIndex {
    cells: HashMap<CellKey, Vec<(String, GeoPoint)>>,
    locations: HashMap<String, GeoPoint>,
}

impl SpatialIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<GeoPoint> {
        self.locations.get(id).copied()
    }

    /// Inserts `id` at `p`. Re-inserting an existing id moves it.
    pub fn insert(&mut self, id: impl Into<String>, p: GeoPoint) {
        let id = id.into();
        if let Some(old) = self.locations.insert(id.clone(), p) {
            self.remove_from_cell(cell_of(old), &id);
        }
        self.cells.entry(cell_of(p)).or_default().push((id, p));
    }

    pub fn remove(&mut self, id: &str) -> Option<GeoPoint> {
        let old = self.locations.remove(id)?;
        self.remove_from_cell(cell_of(old), id);
        Some(old)
    }

    fn remove_from_cell(&mut self, key: CellKey, id: &str) {
        if let Some(bucket) = self.cells.get_mut(&key) {
            bucket.retain(|(other, _)| other != id);
            if bucket.is_empty() {
                self.cells.remove(&key);
            }
        }
    }

    /// Ids listed in the cell containing `p`.
    pub fn cell_members(&self, p: GeoPoint) -> Vec<&str> {
        self.cells
            .get(&cell_of(p))
            .map(|bucket| bucket.iter().map(|(id, _)| id.as_str()).collect())
            .unwrap_or_default()
    }

    /// Total number of (id, point) entries across all cells.
    pub fn cell_entry_count(&self) -> usize {
        self.cells.values().map(Vec::len).sum()
    }

    /// Every item within `radius_m` of `center` (inclusive), paired with its
    /// distance and sorted by ascending distance, then id.
    pub fn query_radius(&self, center: GeoPoint, radius_m: f64) -> Result<Vec<(String, f64)>, GeoError> {
        if radius_m.is_nan() || radius_m < 0.0 {
            return Err(GeoError::Radius(radius_m));
        }
        let mut hits = Vec::new();
        let mut visit = |bucket: &Vec<(String, GeoPoint)>| {
            for (id, p) in bucket {
                let d = haversine_distance(center, *p);
                if d <= radius_m {
                    hits.push((id.clone(), d));
                }
            }
        };

        let (row_lo, row_hi, col_lo, col_hi) = candidate_cells(center, radius_m);
        let span = (row_hi - row_lo + 1) as u64 * (col_hi - col_lo + 1) as u64;
        if span > self.cells.len() as u64 {
            // sparse index relative to the box: walk occupied cells instead
            for ((row, col), bucket) in &self.cells {
                if (row_lo..=row_hi).contains(row) && (col_lo..=col_hi).contains(col) {
                    visit(bucket);
                }
            }
        } else {
            for row in row_lo..=row_hi {
                for col in col_lo..=col_hi {
                    if let Some(bucket) = self.cells.get(&(row, col)) {
                        visit(bucket);
                    }
                }
            }
        }

        hits.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
        Ok(hits)
    }

    /// Runs many radius queries, one result per `(center, radius)` pair.
    pub fn query_radius_batch(
        &self,
        queries: &[(GeoPoint, f64)],
        exec: Exec,
    ) -> Vec<Result<Vec<(String, f64)>, GeoError>> {
        exec.map(queries, |(center, radius)| self.query_radius(*center, *radius))
    }
}

/// Inclusive cell-key ranges covering the bounding box of a query circle.
fn candidate_cells(center: GeoPoint, radius_m: f64) -> (i32, i32, i32, i32) {
    // slack so points sitting exactly on the box edge never fall outside it
    const MARGIN_DEG: f64 = 1e-9;

    let angular = radius_m / EARTH_RADIUS_M;
    let dlat = angular.to_degrees() + MARGIN_DEG;
    let lat_lo = (center.lat - dlat).max(-90.0);
    let lat_hi = (center.lat + dlat).min(90.0);

    let full_lon = (-180.0, 180.0);
    let (lon_lo, lon_hi) = if angular >= std::f64::consts::FRAC_PI_2 || lat_lo <= -90.0 || lat_hi >= 90.0 {
        full_lon
    } else {
        let ratio = angular.sin() / center.lat.to_radians().cos();
        if ratio >= 1.0 {
            full_lon
        } else {
            let dlon = ratio.asin().to_degrees() + MARGIN_DEG;
            ((center.lon - dlon).max(-180.0), (center.lon + dlon).min(180.0))
        }
    };

    (
        (lat_lo / CELL_SIZE_DEG).floor() as i32,
        (lat_hi / CELL_SIZE_DEG).floor() as i32,
        (lon_lo / CELL_SIZE_DEG).floor() as i32,
        (lon_hi / CELL_SIZE_DEG).floor() as i32,
    )
}
