//! Labeled terrain grids and synthetic field generation.
//!
//! A [`LabelGrid`] rasterizes a field into soil/crop/weed cells at a fixed
//! physical resolution. The same type serves as ground truth and as the
//! output of the segmentation oracle. World frame: x east, y north, origin at
//! the field's south-west corner; grid row 0 is the northernmost row.

mod raster;

pub use raster::{from_bytes, read_raster, to_bytes, write_raster, RasterEncoding, RasterError};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::Rect;
use crate::rng;

/// Largest grid side accepted anywhere (also the raster format bound).
pub const MAX_GRID_SIDE: usize = 1 << 16;

/// Cell-center membership snaps to cell boundaries within this fraction of a
/// cell, so abutting footprints computed in floating point never leave a
/// one-cell gap or overlap.
const CELL_SNAP_EPS: f64 = 1e-6;

/// Terrain class of one cell. Codes are fixed and stored in rasters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum ClassId {
    Soil = 0,
    Crop = 1,
    Weed = 2,
}

impl ClassId {
    pub const COUNT: usize = 3;
    pub const ALL: [ClassId; 3] = [ClassId::Soil, ClassId::Crop, ClassId::Weed];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<ClassId> {
        match code {
            0 => Some(ClassId::Soil),
            1 => Some(ClassId::Crop),
            2 => Some(ClassId::Weed),
            _ => None,
        }
    }

    pub fn is_vegetation(self) -> bool {
        matches!(self, ClassId::Crop | ClassId::Weed)
    }
}

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("invalid field spec: {0}")]
    InvalidSpec(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("window does not intersect the grid")]
    EmptyWindow,
}

/// Rasterized class map with physical resolution and world placement.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelGrid {
    width: usize,
    height: usize,
    resolution: f64,
    origin_x: f64,
    origin_y: f64,
    cells: Vec<ClassId>,
}

impl LabelGrid {
    /// Grid of `width`×`height` cells, all set to `fill`.
    pub fn filled(
        width: usize,
        height: usize,
        resolution: f64,
        origin: (f64, f64),
        fill: ClassId,
    ) -> Result<LabelGrid, FieldError> {
        Self::from_cells(width, height, resolution, origin, vec![fill; width * height])
    }

    pub fn from_cells(
        width: usize,
        height: usize,
        resolution: f64,
        origin: (f64, f64),
        cells: Vec<ClassId>,
    ) -> Result<LabelGrid, FieldError> {
        if width == 0 || height == 0 {
            return Err(FieldError::InvalidGrid("zero-sized grid".into()));
        }
        if width > MAX_GRID_SIDE || height > MAX_GRID_SIDE {
            return Err(FieldError::InvalidGrid(format!(
                "grid side exceeds {MAX_GRID_SIDE} cells"
            )));
        }
        if !(resolution > 0.0) || !resolution.is_finite() {
            return Err(FieldError::InvalidGrid("resolution must be positive".into()));
        }
        if cells.len() != width * height {
            return Err(FieldError::InvalidGrid(format!(
                "cell buffer holds {} values, expected {}",
                cells.len(),
                width * height
            )));
        }
        Ok(LabelGrid { width, height, resolution, origin_x: origin.0, origin_y: origin.1, cells })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Meters per pixel.
    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    /// World coordinates of the south-west corner.
    pub fn origin(&self) -> (f64, f64) {
        (self.origin_x, self.origin_y)
    }

    /// Physical extent in meters, (east-west, north-south).
    pub fn extent_m(&self) -> (f64, f64) {
        (self.width as f64 * self.resolution, self.height as f64 * self.resolution)
    }

    /// World rectangle covered by the grid.
    pub fn rect(&self) -> Rect {
        let (w, h) = self.extent_m();
        Rect::new(self.origin_x, self.origin_y, self.origin_x + w, self.origin_y + h)
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    pub fn cells(&self) -> &[ClassId] {
        &self.cells
    }

    /// Row 0 is the northernmost row.
    pub fn get(&self, row: usize, col: usize) -> ClassId {
        self.cells[row * self.width + col]
    }

    pub(crate) fn set(&mut self, row: usize, col: usize, class: ClassId) {
        self.cells[row * self.width + col] = class;
    }

    pub(crate) fn index(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    /// World x of a column's cell centers.
    pub fn center_x(&self, col: usize) -> f64 {
        self.origin_x + (col as f64 + 0.5) * self.resolution
    }

    /// World y of a row's cell centers (row 0 north).
    pub fn center_y(&self, row: usize) -> f64 {
        self.origin_y + (self.height - row) as f64 * self.resolution - 0.5 * self.resolution
    }

    pub fn class_counts(&self) -> [usize; ClassId::COUNT] {
        let mut counts = [0usize; ClassId::COUNT];
        for &c in &self.cells {
            counts[c.code() as usize] += 1;
        }
        counts
    }

    /// Columns whose cell centers fall in the half-open span [min_x, max_x).
    ///
    /// Boundaries within [`CELL_SNAP_EPS`] cells of a cell edge snap to it, so
    /// two abutting spans partition the columns exactly.
    pub(crate) fn col_span(&self, min_x: f64, max_x: f64) -> std::ops::Range<usize> {
        span(min_x, max_x, self.origin_x, self.resolution, self.width)
    }

    /// South-indexed rows (0 = southernmost) with centers in [min_y, max_y).
    pub(crate) fn south_span(&self, min_y: f64, max_y: f64) -> std::ops::Range<usize> {
        span(min_y, max_y, self.origin_y, self.resolution, self.height)
    }

    /// Converts a south index (0 = southernmost) to a storage row index.
    pub(crate) fn row_of_south(&self, south: usize) -> usize {
        self.height - 1 - south
    }

    /// Sub-grid of the cells whose centers fall inside `rect`.
    pub fn crop_window(&self, rect: &Rect) -> Result<LabelGrid, FieldError> {
        let cols = self.col_span(rect.min_x, rect.max_x);
        let souths = self.south_span(rect.min_y, rect.max_y);
        if cols.is_empty() || souths.is_empty() {
            return Err(FieldError::EmptyWindow);
        }
        let out_w = cols.end - cols.start;
        let out_h = souths.end - souths.start;
        let origin =
            (self.origin_x + cols.start as f64 * self.resolution,
             self.origin_y + souths.start as f64 * self.resolution);
        let mut cells = Vec::with_capacity(out_w * out_h);
        let first_row = self.height - souths.end;
        for row in first_row..first_row + out_h {
            let base = row * self.width;
            cells.extend_from_slice(&self.cells[base + cols.start..base + cols.end]);
        }
        LabelGrid::from_cells(out_w, out_h, self.resolution, origin, cells)
    }
}

/// Indices i in [0, len) whose centers origin + (i+0.5)·res lie in [min, max).
fn span(min_w: f64, max_w: f64, origin: f64, res: f64, len: usize) -> std::ops::Range<usize> {
    let a = (min_w - origin) / res - 0.5;
    let b = (max_w - origin) / res - 0.5;
    let start = ((a - CELL_SNAP_EPS).ceil().max(0.0)) as usize;
    let end = (((b - CELL_SNAP_EPS).ceil()).max(0.0) as usize).min(len);
    let start = start.min(end);
    start..end
}

/// Parameters of the synthetic field generator.
///
/// Crops grow as discs of `crop_radius_m` on east-west rows spaced
/// `row_spacing_m` apart (plants every three radii along the row, jittered by
/// `crop_jitter_m`). Weeds grow as discs of half the crop radius, scattered
/// uniformly inside `weed_cluster_count` disc-shaped clusters; each cluster
/// holds `weed_density`·(cluster_radius/plant_radius)² plants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FieldSpec {
    /// (east-west, north-south) size in meters.
    pub extent_m: (f64, f64),
    /// Meters per pixel of the rasterized ground truth.
    pub base_resolution_m_per_px: f64,
    pub row_spacing_m: f64,
    pub crop_radius_m: f64,
    pub crop_jitter_m: f64,
    pub weed_cluster_count: u32,
    pub weed_cluster_radius_m: f64,
    /// Plant packing density inside a weed cluster, in [0, 1].
    pub weed_density: f64,
    pub seed: u64,
}

impl Default for FieldSpec {
    fn default() -> FieldSpec {
        FieldSpec {
            extent_m: (20.0, 20.0),
            base_resolution_m_per_px: 0.005,
            row_spacing_m: 0.8,
            crop_radius_m: 0.12,
            crop_jitter_m: 0.04,
            weed_cluster_count: 12,
            weed_cluster_radius_m: 0.8,
            weed_density: 0.6,
            seed: 1,
        }
    }
}

impl FieldSpec {
    pub fn validate(&self) -> Result<(), FieldError> {
        let bad = |msg: &str| Err(FieldError::InvalidSpec(msg.into()));
        let (w, h) = self.extent_m;
        if !(w > 0.0 && h > 0.0) {
            return bad("extent must be positive");
        }
        if !(self.base_resolution_m_per_px > 0.0) {
            return bad("base resolution must be positive");
        }
        if w < self.base_resolution_m_per_px || h < self.base_resolution_m_per_px {
            return bad("extent smaller than one pixel");
        }
        let side = (w / self.base_resolution_m_per_px).round().max(1.0);
        let side_h = (h / self.base_resolution_m_per_px).round().max(1.0);
        if side > MAX_GRID_SIDE as f64 || side_h > MAX_GRID_SIDE as f64 {
            return bad("extent exceeds the raster dimension bound");
        }
        if !(self.row_spacing_m > 0.0) {
            return bad("row spacing must be positive");
        }
        if !(self.crop_radius_m > 0.0) {
            return bad("crop radius must be positive");
        }
        if self.crop_jitter_m < 0.0 {
            return bad("crop jitter must be non-negative");
        }
        if !(self.weed_cluster_radius_m > 0.0) {
            return bad("weed cluster radius must be positive");
        }
        if !(0.0..=1.0).contains(&self.weed_density) {
            return bad("weed density must lie in [0, 1]");
        }
        Ok(())
    }

    /// Grid dimensions implied by extent and base resolution.
    pub fn grid_size(&self) -> (usize, usize) {
        let w = (self.extent_m.0 / self.base_resolution_m_per_px).round().max(1.0) as usize;
        let h = (self.extent_m.1 / self.base_resolution_m_per_px).round().max(1.0) as usize;
        (w, h)
    }
}

/// One planted disc (crop or weed plant) in world meters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Disc {
    pub cx: f64,
    pub cy: f64,
    pub radius: f64,
}

impl Disc {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let dx = x - self.cx;
        let dy = y - self.cy;
        dx * dx + dy * dy <= self.radius * self.radius
    }
}

/// The planted discs of a field before rasterization.
#[derive(Clone, Debug, Default)]
pub struct FieldLayout {
    pub crop_discs: Vec<Disc>,
    pub weed_discs: Vec<Disc>,
}

/// Plants spaced along a crop row, in units of the crop radius.
const IN_ROW_SPACING_RADII: f64 = 3.0;
/// Weed plant radius, in units of the crop radius.
const WEED_PLANT_RADII: f64 = 0.5;

// Stream tags keep the generator's independent draw families decorrelated.
const STREAM_CROP: u64 = 1;
const STREAM_WEED_CENTER: u64 = 2;
const STREAM_WEED_PLANT: u64 = 3;

/// Places every disc for `spec` without rasterizing.
///
/// Exposed so area oracles can reason about the layout directly.
pub fn plan_layout(spec: &FieldSpec) -> Result<FieldLayout, FieldError> {
    spec.validate()?;
    let (w, h) = spec.extent_m;
    let mut layout = FieldLayout::default();

    let spacing = IN_ROW_SPACING_RADII * spec.crop_radius_m;
    let mut row = 0u64;
    let mut row_y = spec.row_spacing_m;
    while row_y < h {
        let mut plant = 0u64;
        let mut plant_x = 0.5 * spacing;
        while plant_x < w {
            let jx = 2.0 * rng::unit_f64(&[spec.seed, STREAM_CROP, row, plant, 0]) - 1.0;
            let jy = 2.0 * rng::unit_f64(&[spec.seed, STREAM_CROP, row, plant, 1]) - 1.0;
            layout.crop_discs.push(Disc {
                cx: plant_x + jx * spec.crop_jitter_m,
                cy: row_y + jy * spec.crop_jitter_m,
                radius: spec.crop_radius_m,
            });
            plant += 1;
            plant_x += spacing;
        }
        row += 1;
        row_y += spec.row_spacing_m;
    }

    let plant_radius = WEED_PLANT_RADII * spec.crop_radius_m;
    let per_cluster = (spec.weed_density
        * (spec.weed_cluster_radius_m / plant_radius).powi(2))
    .round() as u64;
    for cluster in 0..spec.weed_cluster_count as u64 {
        let cx = rng::unit_f64(&[spec.seed, STREAM_WEED_CENTER, cluster, 0]) * w;
        let cy = rng::unit_f64(&[spec.seed, STREAM_WEED_CENTER, cluster, 1]) * h;
        for plant in 0..per_cluster {
            let u_r = rng::unit_f64(&[spec.seed, STREAM_WEED_PLANT, cluster, plant, 0]);
            let u_t = rng::unit_f64(&[spec.seed, STREAM_WEED_PLANT, cluster, plant, 1]);
            let r = spec.weed_cluster_radius_m * u_r.sqrt();
            let theta = 2.0 * std::f64::consts::PI * u_t;
            layout.weed_discs.push(Disc {
                cx: cx + r * theta.cos(),
                cy: cy + r * theta.sin(),
                radius: plant_radius,
            });
        }
    }
    Ok(layout)
}

/// Rasterizes a layout onto a soil background.
///
/// Crop overwrites soil; weed overwrites both.
pub fn rasterize_layout(layout: &FieldLayout, spec: &FieldSpec) -> Result<LabelGrid, FieldError> {
    spec.validate()?;
    let (w, h) = spec.grid_size();
    let mut grid =
        LabelGrid::filled(w, h, spec.base_resolution_m_per_px, (0.0, 0.0), ClassId::Soil)?;
    for disc in &layout.crop_discs {
        paint_disc(&mut grid, disc, ClassId::Crop);
    }
    for disc in &layout.weed_discs {
        paint_disc(&mut grid, disc, ClassId::Weed);
    }
    Ok(grid)
}

/// Deterministic synthetic field: a pure function of `spec`.
pub fn generate_field(spec: &FieldSpec) -> Result<LabelGrid, FieldError> {
    let layout = plan_layout(spec)?;
    rasterize_layout(&layout, spec)
}

fn paint_disc(grid: &mut LabelGrid, disc: &Disc, class: ClassId) {
    let res = grid.resolution();
    // Candidate box one cell wider than the disc so boundary centers are kept.
    let cols = grid.col_span(disc.cx - disc.radius - res, disc.cx + disc.radius + res);
    let souths = grid.south_span(disc.cy - disc.radius - res, disc.cy + disc.radius + res);
    for south in souths {
        let row = grid.row_of_south(south);
        let y = grid.center_y(row);
        for col in cols.clone() {
            if disc.contains(grid.center_x(col), y) {
                grid.set(row, col, class);
            }
        }
    }
}
