//! Heightmaps, terrain meshes and the climate what-if kernel.
//!
//! The kernel is deliberately a toy model. Flooding is a seeded 4-connected fill
//! below an absolute water-surface elevation, so basins that sit below the level
//! but do not touch a seed stay dry. Vegetation loses a fixed fraction per degree
//! of warming and everything on flooded cells.

use std::collections::VecDeque;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::par::Exec;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TerraError {
    #[error("line {line}: {reason}")]
    Header { line: usize, reason: String },
    #[error("row {row}, col {col}: {reason}")]
    Cell { row: usize, col: usize, reason: String },
    #[error("row {row}: expected {expected} values, found {found}")]
    RowLength { row: usize, expected: usize, found: usize },
    #[error("expected {expected} rows, found {found}")]
    RowCount { expected: usize, found: usize },
    #[error("heightmap has no data cells")]
    AllNodata,
    #[error("seed ({row}, {col}) outside {nrows}x{ncols} grid")]
    SeedOutOfBounds { row: usize, col: usize, nrows: usize, ncols: usize },
    #[error("grid is {found:?}, expected {expected:?}")]
    ShapeMismatch { expected: (usize, usize), found: (usize, usize) },
    #[error("{0}")]
    Domain(String),
}

/// Row-major 2-D grid. Serializes as a list of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<Vec<T>>", try_from = "Vec<Vec<T>>")]
#[serde(bound(serialize = "T: Clone + Serialize", deserialize = "T: Deserialize<'de>"))]
pub struct Grid<T> {
    nrows: usize,
    ncols: usize,
    data: Vec<T>,
}

impl<T> Grid<T> {
    pub fn from_vec(nrows: usize, ncols: usize, data: Vec<T>) -> Result<Self, TerraError> {
        if nrows == 0 || ncols == 0 || data.len() != nrows * ncols {
            return Err(TerraError::Domain(format!(
                "{} values cannot fill a {nrows}x{ncols} grid",
                data.len()
            )));
        }
        Ok(Self { nrows, ncols, data })
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nrows, self.ncols)
    }

    pub fn get(&self, row: usize, col: usize) -> &T {
        &self.data[row * self.ncols + col]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> {
        self.data.chunks(self.ncols)
    }
}

impl<T: Clone> Grid<T> {
    pub fn filled(nrows: usize, ncols: usize, value: T) -> Result<Self, TerraError> {
        Self::from_vec(nrows, ncols, vec![value; nrows * ncols])
    }
}

impl<T: Clone> From<Grid<T>> for Vec<Vec<T>> {
    fn from(g: Grid<T>) -> Self {
        g.rows().map(<[T]>::to_vec).collect()
    }
}

impl<T> TryFrom<Vec<Vec<T>>> for Grid<T> {
    type Error = TerraError;

    fn try_from(rows: Vec<Vec<T>>) -> Result<Self, Self::Error> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        if let Some((row, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != ncols) {
            return Err(TerraError::RowLength {
                row,
                expected: ncols,
                found: r.len(),
            });
        }
        Self::from_vec(nrows, ncols, rows.into_iter().flatten().collect())
    }
}

/// Elevation grid in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeightMap {
    pub cell_size: f64,
    pub nodata: f64,
    pub elevations: Grid<f64>,
}

impl HeightMap {
    pub fn new(elevations: Grid<f64>, cell_size: f64, nodata: f64) -> Result<Self, TerraError> {
        if !(cell_size.is_finite() && cell_size > 0.0) {
            return Err(TerraError::Domain(format!("cell size {cell_size} must be positive")));
        }
        let hm = Self {
            cell_size,
            nodata,
            elevations,
        };
        if hm.min_elevation().is_none() {
            return Err(TerraError::AllNodata);
        }
        Ok(hm)
    }

    pub fn nrows(&self) -> usize {
        self.elevations.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.elevations.ncols()
    }

    pub fn is_nodata(&self, v: f64) -> bool {
        v == self.nodata || v.is_nan()
    }

    /// Elevation at a cell, `None` for nodata.
    pub fn elevation(&self, row: usize, col: usize) -> Option<f64> {
        let v = *self.elevations.get(row, col);
        (!self.is_nodata(v)).then_some(v)
    }

    pub fn min_elevation(&self) -> Option<f64> {
        self.valid().reduce(f64::min)
    }

    pub fn max_elevation(&self) -> Option<f64> {
        self.valid().reduce(f64::max)
    }

    fn valid(&self) -> impl Iterator<Item = f64> + '_ {
        self.elevations.as_slice().iter().copied().filter(|v| !self.is_nodata(*v))
    }

    /// Writes the ASCII grid format read by [`load_heightmap`].
    pub fn to_ascii(&self) -> String {
        let mut out = format!(
            "ncols {} nrows {} cellsize {} nodata {}\n",
            self.ncols(),
            self.nrows(),
            self.cell_size,
            self.nodata
        );
        for row in self.elevations.rows() {
            let line: Vec<String> = row.iter().map(f64::to_string).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }
}

/// Parses `ncols <n> nrows <n> cellsize <m> nodata <v>` followed by `nrows`
/// whitespace-separated rows. Blank lines are ignored.
pub fn load_heightmap(text: &str) -> Result<HeightMap, TerraError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let (header_line, header) = lines.next().ok_or(TerraError::Header {
        line: 1,
        reason: "empty file".into(),
    })?;
    let header_err = |reason: String| TerraError::Header {
        line: header_line,
        reason,
    };

    let tokens: Vec<&str> = header.split_whitespace().collect();
    if tokens.len() != 8 {
        return Err(header_err(format!("expected 4 key/value pairs, found {} tokens", tokens.len())));
    }
    let (mut ncols, mut nrows, mut cell_size, mut nodata) = (None, None, None, None);
    for pair in tokens.chunks(2) {
        let (key, value) = (pair[0].to_lowercase(), pair[1]);
        let num = || value.parse::<f64>().map_err(|_| header_err(format!("{key}: {value:?} is not a number")));
        let count = || {
            value
                .parse::<usize>()
                .ok()
                .filter(|n| *n > 0)
                .ok_or_else(|| header_err(format!("{key}: {value:?} is not a positive integer")))
        };
        match key.as_str() {
            "ncols" => ncols = Some(count()?),
            "nrows" => nrows = Some(count()?),
            "cellsize" => cell_size = Some(num()?),
            "nodata" | "nodata_value" => nodata = Some(num()?),
            other => return Err(header_err(format!("unknown key {other:?}"))),
        }
    }
    let (Some(ncols), Some(nrows), Some(cell_size), Some(nodata)) = (ncols, nrows, cell_size, nodata) else {
        return Err(header_err("header needs ncols, nrows, cellsize and nodata".into()));
    };

    let mut data = Vec::with_capacity(nrows * ncols);
    let mut found_rows = 0;
    for (row, (_, line)) in lines.enumerate() {
        if row >= nrows {
            return Err(TerraError::RowCount {
                expected: nrows,
                found: row + 1,
            });
        }
        let values: Vec<&str> = line.split_whitespace().collect();
        if values.len() != ncols {
            return Err(TerraError::RowLength {
                row,
                expected: ncols,
                found: values.len(),
            });
        }
        for (col, v) in values.into_iter().enumerate() {
            let parsed = v.parse::<f64>().map_err(|_| TerraError::Cell {
                row,
                col,
                reason: format!("{v:?} is not a number"),
            })?;
            data.push(parsed);
        }
        found_rows = row + 1;
    }
    if found_rows != nrows {
        return Err(TerraError::RowCount {
            expected: nrows,
            found: found_rows,
        });
    }
    HeightMap::new(Grid::from_vec(nrows, ncols, data)?, cell_size, nodata)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerrainMesh {
    pub vertices: Vec<[f64; 3]>,
    pub triangles: Vec<[u32; 3]>,
}

impl TerrainMesh {
    /// Wavefront-style text with 1-based face indices.
    pub fn to_obj(&self) -> String {
        let mut out = String::new();
        for [x, y, z] in &self.vertices {
            let _ = writeln!(out, "v {x} {y} {z}");
        }
        for [a, b, c] in &self.triangles {
            let _ = writeln!(out, "f {} {} {}", a + 1, b + 1, c + 1);
        }
        out
    }
}

/// One vertex per cell at `(col * cell, row * cell, z * exaggeration)` and two
/// counter-clockwise triangles per grid square. Nodata cells sit at the lowest
/// valid elevation.
pub fn mesh_from_heightmap(hm: &HeightMap, vertical_exaggeration: f64, exec: Exec) -> Result<TerrainMesh, TerraError> {
    if !(vertical_exaggeration.is_finite() && vertical_exaggeration > 0.0) {
        return Err(TerraError::Domain(format!(
            "vertical exaggeration {vertical_exaggeration} must be positive"
        )));
    }
    let (nrows, ncols) = (hm.nrows(), hm.ncols());
    if nrows * ncols > u32::MAX as usize {
        return Err(TerraError::Domain("grid too large for 32-bit indices".into()));
    }
    let floor = hm.min_elevation().ok_or(TerraError::AllNodata)?;

    let vertex_rows = exec.map_range(nrows, |row| {
        (0..ncols)
            .map(|col| {
                let z = hm.elevation(row, col).unwrap_or(floor);
                [
                    col as f64 * hm.cell_size,
                    row as f64 * hm.cell_size,
                    z * vertical_exaggeration,
                ]
            })
            .collect::<Vec<_>>()
    });
    let triangle_rows = exec.map_range(nrows.saturating_sub(1), |row| {
        let mut tris = Vec::with_capacity(2 * (ncols - 1));
        for col in 0..ncols - 1 {
            let a = (row * ncols + col) as u32;
            let b = a + 1;
            let c = a + ncols as u32;
            let d = c + 1;
            tris.push([a, b, d]);
            tris.push([a, d, c]);
        }
        tris
    });
    Ok(TerrainMesh {
        vertices: vertex_rows.into_iter().flatten().collect(),
        triangles: triangle_rows.into_iter().flatten().collect(),
    })
}

/// Cells reachable from an eligible seed through 4-connected cells at or below
/// `water_level`. Nodata cells block the fill.
pub fn flood_extent(hm: &HeightMap, water_level: f64, seeds: &[(usize, usize)]) -> Result<Grid<bool>, TerraError> {
    let (nrows, ncols) = (hm.nrows(), hm.ncols());
    if let Some(&(row, col)) = seeds.iter().find(|(r, c)| *r >= nrows || *c >= ncols) {
        return Err(TerraError::SeedOutOfBounds { row, col, nrows, ncols });
    }
    let wet = |r: usize, c: usize| hm.elevation(r, c).is_some_and(|z| z <= water_level);

    let mut mask = vec![false; nrows * ncols];
    let mut queue = VecDeque::new();
    for &(r, c) in seeds {
        if wet(r, c) && !mask[r * ncols + c] {
            mask[r * ncols + c] = true;
            queue.push_back((r, c));
        }
    }
    while let Some((r, c)) = queue.pop_front() {
        let neighbors = [
            (r.wrapping_sub(1), c),
            (r + 1, c),
            (r, c.wrapping_sub(1)),
            (r, c + 1),
        ];
        for (nr, nc) in neighbors {
            if nr < nrows && nc < ncols && !mask[nr * ncols + nc] && wet(nr, nc) {
                mask[nr * ncols + nc] = true;
                queue.push_back((nr, nc));
            }
        }
    }
    Grid::from_vec(nrows, ncols, mask)
}

/// Inundated cell counts for each level in `levels`.
pub fn flood_sweep(
    hm: &HeightMap,
    levels: &[f64],
    seeds: &[(usize, usize)],
    exec: Exec,
) -> Result<Vec<usize>, TerraError> {
    exec.map(levels, |level| {
        flood_extent(hm, *level, seeds).map(|m| m.as_slice().iter().filter(|w| **w).count())
    })
    .into_iter()
    .collect()
}

/// Coefficients of the vegetation response.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VegetationParams {
    /// Coverage lost per degree of warming.
    pub alpha: f64,
    /// Coverage lost on an inundated cell.
    pub beta: f64,
}

impl Default for VegetationParams {
    fn default() -> Self {
        Self { alpha: 0.05, beta: 1.0 }
    }
}

/// The adjustable climate indicators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorState {
    /// Absolute water-surface elevation; `-inf` (JSON `null`) means no water.
    #[serde(with = "level_or_null")]
    pub water_level: f64,
    pub temp_delta: f64,
    pub veg_base: Grid<f64>,
}

impl IndicatorState {
    /// No water, no warming.
    pub fn baseline(veg_base: Grid<f64>) -> Self {
        Self {
            water_level: f64::NEG_INFINITY,
            temp_delta: 0.0,
            veg_base,
        }
    }

    pub fn validate(&self) -> Result<(), TerraError> {
        if self.water_level.is_nan() || self.water_level == f64::INFINITY {
            return Err(TerraError::Domain(format!("water level {} is not usable", self.water_level)));
        }
        if !self.temp_delta.is_finite() {
            return Err(TerraError::Domain(format!("temperature delta {} is not finite", self.temp_delta)));
        }
        if let Some(bad) = self.veg_base.as_slice().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(TerraError::Domain(format!("vegetation coverage {bad} outside [0, 1]")));
        }
        Ok(())
    }
}

mod level_or_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
    }
}

/// `clamp(base - alpha * max(dT, 0) - beta * inundated, 0, 1)` per cell.
pub fn vegetation_response(
    state: &IndicatorState,
    mask: &Grid<bool>,
    params: VegetationParams,
    exec: Exec,
) -> Result<Grid<f64>, TerraError> {
    if state.veg_base.shape() != mask.shape() {
        return Err(TerraError::ShapeMismatch {
            expected: mask.shape(),
            found: state.veg_base.shape(),
        });
    }
    let warming = params.alpha * state.temp_delta.max(0.0);
    let ncols = mask.ncols();
    let rows = exec.map_range(mask.nrows(), |row| {
        (0..ncols)
            .map(|col| {
                let flooded = if *mask.get(row, col) { params.beta } else { 0.0 };
                (state.veg_base.get(row, col) - warming - flooded).clamp(0.0, 1.0)
            })
            .collect::<Vec<_>>()
    });
    Grid::from_vec(mask.nrows(), ncols, rows.into_iter().flatten().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub inundated_cell_count: usize,
    pub inundated_area_m2: f64,
    pub mean_coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub mask: Grid<bool>,
    pub coverage: Grid<f64>,
    pub summary: ScenarioSummary,
    /// Outputs come from a toy model.
    pub illustrative: bool,
}

/// Floods from `seeds`, then applies the vegetation response.
pub fn simulate(
    hm: &HeightMap,
    state: &IndicatorState,
    seeds: &[(usize, usize)],
    params: VegetationParams,
    exec: Exec,
) -> Result<ScenarioResult, TerraError> {
    state.validate()?;
    let mask = flood_extent(hm, state.water_level, seeds)?;
    let coverage = vegetation_response(state, &mask, params, exec)?;
    let count = mask.as_slice().iter().filter(|w| **w).count();
    let cells = coverage.as_slice();
    let mean_coverage = cells.iter().sum::<f64>() / cells.len() as f64;
    Ok(ScenarioResult {
        summary: ScenarioSummary {
            inundated_cell_count: count,
            inundated_area_m2: count as f64 * hm.cell_size * hm.cell_size,
            mean_coverage,
        },
        mask,
        coverage,
        illustrative: true,
    })
}
