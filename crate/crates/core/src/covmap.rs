//! Coverage rasters: per-BS SS-RSRP predictions on a lon/lat grid at a fixed
//! altitude, fused across BSs by cell-wise maximum.
//!
//! Rows run south to north and columns west to east, starting at the grid
//! origin (its south-west corner). Cells without coverage hold `None`.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::BsRecord;
use crate::error::{Error, Result};
use crate::geo::{enu_offset, BsLocation, SamplePoint, METERS_PER_DEGREE};
use crate::model::{DisentangledModel, PreparedSample};

/// Ramp bounds for heatmaps, dBm.
pub const RAMP_MIN_DBM: f64 = -130.0;
pub const RAMP_MAX_DBM: f64 = -60.0;

const PREDICT_CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub origin_lon: f64,
    pub origin_lat: f64,
    /// East-west extent, meters.
    pub extent_x_m: f64,
    /// North-south extent, meters.
    pub extent_y_m: f64,
    pub resolution_m: f64,
    pub altitude_m: f64,
}

impl GridSpec {
    pub fn new(origin_lon: f64, origin_lat: f64, extent_x_m: f64, extent_y_m: f64) -> Self {
        GridSpec {
            origin_lon,
            origin_lat,
            extent_x_m,
            extent_y_m,
            resolution_m: 10.0,
            altitude_m: 120.0,
        }
    }

    /// A square grid of half-width `half_extent_m` centered on `(lon, lat)`.
    pub fn centered(lon: f64, lat: f64, half_extent_m: f64) -> Self {
        let probe = BsLocation {
            longitude: lon,
            latitude: lat,
            antenna_height: 0.0,
        };
        let sw = crate::geo::point_at_offset(
            &probe,
            &crate::geo::EnuOffset {
                east: -half_extent_m,
                north: -half_extent_m,
                up: 0.0,
            },
        );
        GridSpec::new(
            sw.longitude,
            sw.latitude,
            2.0 * half_extent_m,
            2.0 * half_extent_m,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.origin_lon,
            self.origin_lat,
            self.extent_x_m,
            self.extent_y_m,
            self.resolution_m,
            self.altitude_m,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("grid spec values must be finite"));
        }
        if !(self.resolution_m > 0.0 && self.extent_x_m > 0.0 && self.extent_y_m > 0.0) {
            return Err(Error::invalid(
                "grid resolution and extent must be positive",
            ));
        }
        if self.altitude_m < 0.0 || self.origin_lat.abs() >= 90.0 {
            return Err(Error::invalid("grid altitude or latitude out of range"));
        }
        Ok(())
    }

    pub fn rows(&self) -> usize {
        (self.extent_y_m / self.resolution_m).ceil() as usize
    }

    pub fn cols(&self) -> usize {
        (self.extent_x_m / self.resolution_m).ceil() as usize
    }

    fn lon_scale(&self) -> f64 {
        self.origin_lat.to_radians().cos() * METERS_PER_DEGREE
    }

    /// Center of cell `(row, col)` at the grid altitude.
    pub fn cell_center(&self, row: usize, col: usize) -> SamplePoint {
        let east = (col as f64 + 0.5) * self.resolution_m;
        let north = (row as f64 + 0.5) * self.resolution_m;
        SamplePoint {
            longitude: self.origin_lon + east / self.lon_scale(),
            latitude: self.origin_lat + north / METERS_PER_DEGREE,
            altitude: self.altitude_m,
        }
    }

    /// Cell containing `(lon, lat)`, or an out-of-bounds error.
    pub fn locate(&self, lon: f64, lat: f64) -> Result<(usize, usize)> {
        let east = (lon - self.origin_lon) * self.lon_scale();
        let north = (lat - self.origin_lat) * METERS_PER_DEGREE;
        // the last row and column may overhang the nominal extent
        let inside = |v: f64, cells: usize| {
            v.is_finite() && (0.0..=cells as f64 * self.resolution_m).contains(&v)
        };
        if !(inside(east, self.cols()) && inside(north, self.rows())) {
            return Err(Error::OutOfBounds { lon, lat });
        }
        let row = ((north / self.resolution_m) as usize).min(self.rows() - 1);
        let col = ((east / self.resolution_m) as usize).min(self.cols() - 1);
        Ok((row, col))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageGrid {
    pub spec: GridSpec,
    /// Row-major SS-RSRP in dBm; `None` where no BS covers the cell.
    pub values: Vec<Option<f64>>,
    /// Row-major id of the BS that supplied each value.
    pub contributing_bs: Option<Vec<Option<String>>>,
}

impl CoverageGrid {
    pub fn empty(spec: GridSpec) -> Result<Self> {
        spec.validate()?;
        let n = spec.rows() * spec.cols();
        Ok(CoverageGrid {
            spec,
            values: vec![None; n],
            contributing_bs: Some(vec![None; n]),
        })
    }

    pub fn rows(&self) -> usize {
        self.spec.rows()
    }

    pub fn cols(&self) -> usize {
        self.spec.cols()
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.values[row * self.cols() + col]
    }

    pub fn contributor(&self, row: usize, col: usize) -> Option<&str> {
        self.contributing_bs
            .as_ref()
            .and_then(|ids| ids[row * self.cols() + col].as_deref())
    }

    pub fn populated(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }

    fn check(&self) -> Result<()> {
        let n = self.spec.rows() * self.spec.cols();
        if self.values.len() != n {
            return Err(Error::Shape {
                expected: n,
                got: self.values.len(),
            });
        }
        if let Some(ids) = &self.contributing_bs {
            if ids.len() != n {
                return Err(Error::Shape {
                    expected: n,
                    got: ids.len(),
                });
            }
        }
        Ok(())
    }
}

/// Predicted SS-RSRP of one BS on every cell whose center lies within
/// `radius_m` (horizontal distance) of the antenna.
pub fn predict_grid(
    model: &DisentangledModel,
    bs: &BsRecord,
    spec: &GridSpec,
    radius_m: f64,
) -> Result<CoverageGrid> {
    if !(radius_m >= 0.0 && radius_m.is_finite()) {
        return Err(Error::invalid("radius must be finite and nonnegative"));
    }
    let mut grid = CoverageGrid::empty(*spec)?;
    let cols = spec.cols();
    let mut cells = Vec::new();
    let mut prepared = Vec::new();
    for row in 0..spec.rows() {
        for col in 0..cols {
            let pt = spec.cell_center(row, col);
            let d = enu_offset(&bs.location, &pt)?;
            if d.east.hypot(d.north) > radius_m {
                continue;
            }
            match PreparedSample::from_point(bs, &pt) {
                Ok(p) => {
                    cells.push(row * cols + col);
                    prepared.push(p);
                }
                Err(Error::DegenerateGeometry(_)) => {}
                Err(e) => return Err(e),
            }
        }
    }
    let ids = grid.contributing_bs.as_mut().expect("fresh grid has ids");
    for (idx_chunk, chunk) in cells
        .chunks(PREDICT_CHUNK)
        .zip(prepared.chunks(PREDICT_CHUNK))
    {
        let refs: Vec<&PreparedSample> = chunk.iter().collect();
        let out = model.predict_prepared(&refs)?;
        for (&i, p) in idx_chunk.iter().zip(out) {
            grid.values[i] = Some(p[0]);
            ids[i] = Some(bs.bs_id.clone());
        }
    }
    Ok(grid)
}

/// Cell-wise maximum, ignoring `None`. Ties keep the earlier grid's value.
pub fn fuse_max(grids: &[CoverageGrid]) -> Result<CoverageGrid> {
    let first = grids
        .first()
        .ok_or_else(|| Error::invalid("nothing to fuse"))?;
    for g in grids {
        g.check()?;
        if g.spec != first.spec {
            return Err(Error::invalid("cannot fuse grids with different specs"));
        }
    }
    let n = first.values.len();
    let mut values = vec![None; n];
    let mut ids: Vec<Option<String>> = vec![None; n];
    for g in grids {
        for i in 0..n {
            if let Some(v) = g.values[i] {
                if values[i].is_none_or(|cur| v > cur) {
                    values[i] = Some(v);
                    ids[i] = g.contributing_bs.as_ref().and_then(|c| c[i].clone());
                }
            }
        }
    }
    Ok(CoverageGrid {
        spec: first.spec,
        values,
        contributing_bs: Some(ids),
    })
}

/// Predict every BS on the same grid and fuse. Per-BS predictions run on
/// `jobs` threads.
pub fn predict_area(
    model: &DisentangledModel,
    bss: &[BsRecord],
    spec: &GridSpec,
    radius_m: f64,
    jobs: usize,
) -> Result<CoverageGrid> {
    if bss.is_empty() {
        return CoverageGrid::empty(*spec);
    }
    let grids: Vec<CoverageGrid> = if jobs <= 1 {
        bss.iter()
            .map(|bs| predict_grid(model, bs, spec, radius_m))
            .collect::<Result<_>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::invalid(e.to_string()))?;
        pool.install(|| {
            bss.par_iter()
                .map(|bs| predict_grid(model, bs, spec, radius_m))
                .collect::<Result<_>>()
        })?
    };
    fuse_max(&grids)
}

/// Nearest-cell lookup for each point; altitude is ignored.
pub fn sample_at(grid: &CoverageGrid, points: &[SamplePoint]) -> Result<Vec<Option<f64>>> {
    points
        .iter()
        .map(|p| {
            let (r, c) = grid.spec.locate(p.longitude, p.latitude)?;
            Ok(grid.get(r, c))
        })
        .collect()
}

pub const CSV_COLUMNS: [&str; 4] = ["lon", "lat", "ss_rsrp_dbm", "contributing_bs_id"];

/// One row per cell in row-major order; sentinel cells have an empty value.
pub fn write_csv<W: Write>(out: W, grid: &CoverageGrid) -> Result<()> {
    grid.check()?;
    let fmt = |e: csv::Error| Error::Format(e.to_string());
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_COLUMNS).map_err(fmt)?;
    for row in 0..grid.rows() {
        for col in 0..grid.cols() {
            let c = grid.spec.cell_center(row, col);
            w.write_record([
                c.longitude.to_string(),
                c.latitude.to_string(),
                grid.get(row, col)
                    .map(|v| v.to_string())
                    .unwrap_or_default(),
                grid.contributor(row, col).unwrap_or("").to_string(),
            ])
            .map_err(fmt)?;
        }
    }
    w.flush().map_err(|e| Error::Format(e.to_string()))
}

/// Rebuild a grid written by [`write_csv`], given its spec.
pub fn read_csv<R: Read>(input: R, spec: GridSpec) -> Result<CoverageGrid> {
    let mut grid = CoverageGrid::empty(spec)?;
    let n = grid.values.len();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(input);
    let ids = grid.contributing_bs.as_mut().expect("fresh grid has ids");
    let mut count = 0;
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Parse {
            row,
            msg: e.to_string(),
        })?;
        if i >= n {
            return Err(Error::Parse {
                row,
                msg: "more rows than grid cells".into(),
            });
        }
        let value = rec.get(2).unwrap_or("").trim();
        if !value.is_empty() {
            let v: f64 = value.parse().map_err(|_| Error::Parse {
                row,
                msg: format!("cannot parse {value:?} as dBm"),
            })?;
            grid.values[i] = Some(v);
        }
        let id = rec.get(3).unwrap_or("").trim();
        if !id.is_empty() {
            ids[i] = Some(id.to_string());
        }
        count += 1;
    }
    if count != n {
        return Err(Error::Shape {
            expected: n,
            got: count,
        });
    }
    Ok(grid)
}

/// Position of `dbm` along the color ramp, clamped to `[0, 1]`.
pub fn ramp_position(dbm: f64) -> f64 {
    ((dbm - RAMP_MIN_DBM) / (RAMP_MAX_DBM - RAMP_MIN_DBM)).clamp(0.0, 1.0)
}

/// Blue, cyan, green, yellow, red.
const RAMP_STOPS: [[f64; 3]; 5] = [
    [0.0, 0.0, 255.0],
    [0.0, 255.0, 255.0],
    [0.0, 255.0, 0.0],
    [255.0, 255.0, 0.0],
    [255.0, 0.0, 0.0],
];

pub fn ramp_color(dbm: f64) -> [u8; 3] {
    let t = ramp_position(dbm) * (RAMP_STOPS.len() - 1) as f64;
    let k = (t as usize).min(RAMP_STOPS.len() - 2);
    let frac = t - k as f64;
    let (a, b) = (RAMP_STOPS[k], RAMP_STOPS[k + 1]);
    std::array::from_fn(|c| (a[c] + (b[c] - a[c]) * frac).round() as u8)
}

/// Binary PPM heatmap, north up; sentinel cells are white.
pub fn write_ppm<W: Write>(mut out: W, grid: &CoverageGrid) -> Result<()> {
    grid.check()?;
    let (rows, cols) = (grid.rows(), grid.cols());
    let fmt = |e: std::io::Error| Error::Format(e.to_string());
    write!(out, "P6\n{cols} {rows}\n255\n").map_err(fmt)?;
    let mut line = Vec::with_capacity(cols * 3);
    for row in (0..rows).rev() {
        line.clear();
        for col in 0..cols {
            let px = grid.get(row, col).map_or([255, 255, 255], ramp_color);
            line.extend_from_slice(&px);
        }
        out.write_all(&line).map_err(fmt)?;
    }
    out.flush().map_err(fmt)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMetadata {
    pub spec: GridSpec,
    pub rows: usize,
    pub cols: usize,
    pub populated_cells: usize,
    pub ramp_min_dbm: f64,
    pub ramp_max_dbm: f64,
}

impl GridMetadata {
    pub fn of(grid: &CoverageGrid) -> Self {
        GridMetadata {
            spec: grid.spec,
            rows: grid.rows(),
            cols: grid.cols(),
            populated_cells: grid.populated(),
            ramp_min_dbm: RAMP_MIN_DBM,
            ramp_max_dbm: RAMP_MAX_DBM,
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("metadata serializes")
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Format(format!("grid metadata: {e}")))
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

pub fn save_csv(path: &Path, grid: &CoverageGrid) -> Result<()> {
    write_csv(create(path)?, grid)
}

pub fn save_ppm(path: &Path, grid: &CoverageGrid) -> Result<()> {
    write_ppm(create(path)?, grid)
}

pub fn save_metadata(path: &Path, grid: &CoverageGrid) -> Result<()> {
    std::fs::write(path, GridMetadata::of(grid).to_toml_string()).map_err(|e| Error::io(path, e))
}

/// Load a map from its CSV and metadata sidecar.
pub fn load_map(csv_path: &Path, meta_path: &Path) -> Result<CoverageGrid> {
    let text = std::fs::read_to_string(meta_path).map_err(|e| Error::io(meta_path, e))?;
    let meta = GridMetadata::from_toml_str(&text)?;
    let f = File::open(csv_path).map_err(|e| Error::io(csv_path, e))?;
    read_csv(f, meta.spec)
}
