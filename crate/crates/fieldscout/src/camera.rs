//! Altitude/GSD/footprint geometry and lawn-mower waypoint grids.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::Rect;

/// Relative slack for "does the footprint fit" and tile-count decisions, so
/// extents that equal a whole number of footprints up to float error tile
/// exactly.
const TILE_EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum CameraError {
    #[error("{0} must be positive and finite")]
    NonPositive(&'static str),
    #[error("footprint {fp_w} m x {fp_h} m exceeds field extent {field_w} m x {field_h} m")]
    FootprintExceedsField { fp_w: f64, fp_h: f64, field_w: f64, field_h: f64 },
    #[error("child gsd {child} m/px must be strictly finer than parent gsd {parent} m/px")]
    ChildNotFiner { child: f64, parent: f64 },
    #[error("invalid gsd ladder: {0}")]
    InvalidLadder(String),
}

/// Pinhole camera intrinsics sufficient for nadir ground sampling.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CameraModel {
    pub sensor_width_mm: f64,
    pub focal_length_mm: f64,
    pub image_width_px: u32,
    pub image_height_px: u32,
}

impl Default for CameraModel {
    fn default() -> CameraModel {
        CameraModel {
            sensor_width_mm: 6.17,
            focal_length_mm: 3.6,
            image_width_px: 4000,
            image_height_px: 3000,
        }
    }
}

impl CameraModel {
    pub fn validate(&self) -> Result<(), CameraError> {
        if !(self.sensor_width_mm > 0.0 && self.sensor_width_mm.is_finite()) {
            return Err(CameraError::NonPositive("sensor width"));
        }
        if !(self.focal_length_mm > 0.0 && self.focal_length_mm.is_finite()) {
            return Err(CameraError::NonPositive("focal length"));
        }
        if self.image_width_px == 0 || self.image_height_px == 0 {
            return Err(CameraError::NonPositive("image dimension"));
        }
        Ok(())
    }

    /// Meters of altitude per m/px of GSD; the slope of `altitude_at_gsd`.
    pub fn altitude_per_gsd(&self) -> f64 {
        self.focal_length_mm * self.image_width_px as f64 / self.sensor_width_mm
    }

    /// Ground sampling distance in m/px at altitude `h_m` meters.
    ///
    /// The mm units of sensor width and focal length cancel.
    pub fn gsd_at_altitude(&self, h_m: f64) -> Result<f64, CameraError> {
        if !(h_m > 0.0 && h_m.is_finite()) {
            return Err(CameraError::NonPositive("altitude"));
        }
        Ok(h_m / self.altitude_per_gsd())
    }

    /// Altitude in meters that produces `gsd` m/px; exact inverse of
    /// [`gsd_at_altitude`](Self::gsd_at_altitude).
    pub fn altitude_at_gsd(&self, gsd: f64) -> Result<f64, CameraError> {
        if !(gsd > 0.0 && gsd.is_finite()) {
            return Err(CameraError::NonPositive("gsd"));
        }
        Ok(gsd * self.altitude_per_gsd())
    }

    /// Nadir footprint size (east-west, north-south) in meters at `gsd`.
    pub fn footprint_size(&self, gsd: f64) -> (f64, f64) {
        (gsd * self.image_width_px as f64, gsd * self.image_height_px as f64)
    }

    /// Axis-aligned world rectangle imaged from `wp`.
    pub fn footprint(&self, wp: &Waypoint) -> Rect {
        let (w, h) = self.footprint_size(wp.gsd());
        Rect::centered(wp.x(), wp.y(), w, h)
    }

    /// Serpentine waypoint grid whose footprints cover `field` at
    /// `gsd_survey`, row 0 along the north edge running west to east.
    ///
    /// Tiles are exact when the extent divides evenly; otherwise the last
    /// row/column is shifted inward so every footprint stays inside the
    /// field (fusion resolves the duplicated strip).
    pub fn survey_grid(&self, field: &Rect, gsd_survey: f64) -> Result<Vec<Waypoint>, CameraError> {
        self.validate()?;
        let (fw, fh) = self.footprint_size(gsd_survey);
        let grid = TileGrid::fit(field, fw, fh)?;
        let mut out = Vec::with_capacity(grid.nx * grid.ny);
        for j in 0..grid.ny {
            let cols: Box<dyn Iterator<Item = usize>> = if j % 2 == 0 {
                Box::new(0..grid.nx)
            } else {
                Box::new((0..grid.nx).rev())
            };
            for i in cols {
                let (x, y) = grid.center(i, j);
                out.push(Waypoint::new(self, x, y, gsd_survey, WaypointLevel::Survey)?);
            }
        }
        Ok(out)
    }

    /// Serpentine sub-grid covering `parent`'s footprint at the finer
    /// `gsd_child`, starting at the grid corner nearest `entry`.
    pub fn inspection_grid(
        &self,
        parent: &Waypoint,
        gsd_child: f64,
        entry: (f64, f64),
    ) -> Result<Vec<Waypoint>, CameraError> {
        self.validate()?;
        if !(gsd_child > 0.0 && gsd_child.is_finite()) {
            return Err(CameraError::NonPositive("gsd"));
        }
        if gsd_child >= parent.gsd() {
            return Err(CameraError::ChildNotFiner { child: gsd_child, parent: parent.gsd() });
        }
        let area = self.footprint(parent);
        let (fw, fh) = self.footprint_size(gsd_child);
        let grid = TileGrid::fit(&area, fw, fh)?;

        // Grid corners in (col, row) form; rows count from the north.
        // Nearest to the entry point wins; ties resolve NW, NE, SW, SE.
        let corners =
            [(0, 0), (grid.nx - 1, 0), (0, grid.ny - 1), (grid.nx - 1, grid.ny - 1)];
        let dist = |(i, j): (usize, usize)| {
            let (x, y) = grid.center(i, j);
            (x - entry.0).powi(2) + (y - entry.1).powi(2)
        };
        let mut start = corners[0];
        let mut best = dist(start);
        for &corner in &corners[1..] {
            let d = dist(corner);
            if d < best {
                best = d;
                start = corner;
            }
        }
        let (start_col, start_row) = start;

        let rows: Vec<usize> = if start_row == 0 {
            (0..grid.ny).collect()
        } else {
            (0..grid.ny).rev().collect()
        };
        let mut out = Vec::with_capacity(grid.nx * grid.ny);
        for (k, &j) in rows.iter().enumerate() {
            let west_first = (start_col == 0) == (k % 2 == 0);
            let cols: Box<dyn Iterator<Item = usize>> = if west_first {
                Box::new(0..grid.nx)
            } else {
                Box::new((0..grid.nx).rev())
            };
            for i in cols {
                let (x, y) = grid.center(i, j);
                out.push(Waypoint::new(self, x, y, gsd_child, WaypointLevel::Inspect)?);
            }
        }
        Ok(out)
    }
}

/// Rectangular tiling of an area by fixed-size footprints with inward edge
/// clamping.
struct TileGrid {
    area: Rect,
    fw: f64,
    fh: f64,
    nx: usize,
    ny: usize,
}

impl TileGrid {
    fn fit(area: &Rect, fw: f64, fh: f64) -> Result<TileGrid, CameraError> {
        let (aw, ah) = (area.width(), area.height());
        if fw > aw * (1.0 + TILE_EPS) || fh > ah * (1.0 + TILE_EPS) {
            return Err(CameraError::FootprintExceedsField {
                fp_w: fw,
                fp_h: fh,
                field_w: aw,
                field_h: ah,
            });
        }
        let count = |extent: f64, fp: f64| ((extent / fp - TILE_EPS).ceil() as usize).max(1);
        Ok(TileGrid { area: *area, fw, fh, nx: count(aw, fw), ny: count(ah, fh) })
    }

    /// Footprint center of column `i`, row `j` (row 0 north).
    fn center(&self, i: usize, j: usize) -> (f64, f64) {
        let x = (self.area.min_x + (i as f64 + 0.5) * self.fw)
            .min(self.area.max_x - 0.5 * self.fw);
        let y = (self.area.max_y - (j as f64 + 0.5) * self.fh)
            .max(self.area.min_y + 0.5 * self.fh);
        (x, y)
    }
}

/// Altitude band a waypoint belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WaypointLevel {
    Survey,
    Inspect,
}

/// A hover-and-shoot position. Altitude and GSD are kept consistent by
/// construction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    x: f64,
    y: f64,
    altitude_m: f64,
    gsd: f64,
    level: WaypointLevel,
}

impl Waypoint {
    pub fn new(
        cam: &CameraModel,
        x: f64,
        y: f64,
        gsd: f64,
        level: WaypointLevel,
    ) -> Result<Waypoint, CameraError> {
        let altitude_m = cam.altitude_at_gsd(gsd)?;
        Ok(Waypoint { x, y, altitude_m, gsd, level })
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn altitude_m(&self) -> f64 {
        self.altitude_m
    }

    pub fn gsd(&self) -> f64 {
        self.gsd
    }

    pub fn level(&self) -> WaypointLevel {
        self.level
    }

    /// Straight-line 3D distance in meters.
    pub fn distance_to(&self, other: &Waypoint) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.altitude_m - other.altitude_m;
        (dx * dx + dy * dy + dz * dz).sqrt()
    }
}

/// Candidate GSDs, strictly decreasing from the survey rung to the finest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct GsdLadder {
    rungs: Vec<f64>,
}

impl Default for GsdLadder {
    /// 3.0 down to 1.0 cm/px in half-centimeter rungs, stored in m/px.
    fn default() -> GsdLadder {
        GsdLadder { rungs: vec![0.030, 0.025, 0.020, 0.015, 0.010] }
    }
}

impl GsdLadder {
    pub fn new(rungs: Vec<f64>) -> Result<GsdLadder, CameraError> {
        if rungs.len() < 2 {
            return Err(CameraError::InvalidLadder("need at least two rungs".into()));
        }
        if rungs.iter().any(|g| !(g.is_finite() && *g > 0.0)) {
            return Err(CameraError::InvalidLadder("rungs must be positive and finite".into()));
        }
        if rungs.windows(2).any(|w| w[1] >= w[0]) {
            return Err(CameraError::InvalidLadder(
                "rungs must be strictly decreasing (coarse to fine)".into(),
            ));
        }
        Ok(GsdLadder { rungs })
    }

    pub fn rungs(&self) -> &[f64] {
        &self.rungs
    }

    pub fn len(&self) -> usize {
        self.rungs.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// The coarse rung flown by the initial full-coverage pass.
    pub fn survey(&self) -> f64 {
        self.rungs[0]
    }

    pub fn finest(&self) -> f64 {
        *self.rungs.last().unwrap()
    }
}

impl TryFrom<Vec<f64>> for GsdLadder {
    type Error = CameraError;

    fn try_from(rungs: Vec<f64>) -> Result<GsdLadder, CameraError> {
        GsdLadder::new(rungs)
    }
}

impl From<GsdLadder> for Vec<f64> {
    fn from(ladder: GsdLadder) -> Vec<f64> {
        ladder.rungs
    }
}
