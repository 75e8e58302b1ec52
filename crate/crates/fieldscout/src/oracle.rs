//! Altitude-dependent segmentation simulator.
//!
//! Stands in for an onboard segmentation network. Degradation happens in two
//! independent stages: majority pooling to the sensor resolution (detail
//! smaller than a sensor pixel vanishes), then per-pixel label corruption
//! whose probability grows linearly with GSD. Both stages are pure functions
//! of their inputs, so replaying an image always reproduces it.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{ClassId, LabelGrid};
use crate::geom::Rect;
use crate::rng;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("invalid oracle params: {0}")]
    InvalidParams(String),
    #[error("gsd {gsd} m/px is below the ground-truth resolution {base} m/px")]
    GsdBelowBase { gsd: f64, base: f64 },
    #[error("footprint extends outside the ground-truth extent")]
    FootprintOutside,
    #[error("{0}")]
    Grid(#[from] crate::field::FieldError),
}

/// Error model of the simulated segmenter, indexed by class code.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleParams {
    /// Per-class flip probability at `min_gsd_m_per_px`.
    pub base_error: [f64; ClassId::COUNT],
    /// Per-class flip-probability growth per m/px of GSD.
    pub error_slope: [f64; ClassId::COUNT],
    /// Flip probability saturates here.
    pub error_cap: f64,
    /// GSD at which `base_error` applies; error grows linearly above it.
    pub min_gsd_m_per_px: f64,
    /// Row-stochastic, zero-diagonal: `confusion[c][w]` is the probability
    /// that a flipped pixel of true class `c` comes out as class `w`.
    pub confusion: [[f64; ClassId::COUNT]; ClassId::COUNT],
    pub seed: u64,
}

impl Default for OracleParams {
    fn default() -> OracleParams {
        OracleParams {
            base_error: [0.01, 0.03, 0.05],
            // 0.2 / 1.0 / 2.0 per cm/px: weeds degrade fastest with altitude.
            error_slope: [20.0, 100.0, 200.0],
            error_cap: 0.35,
            min_gsd_m_per_px: 0.010,
            confusion: [
                [0.0, 0.7, 0.3],
                [0.3, 0.0, 0.7],
                [0.2, 0.8, 0.0],
            ],
            seed: 0,
        }
    }
}

impl OracleParams {
    pub fn validate(&self) -> Result<(), OracleError> {
        let bad = |msg: String| Err(OracleError::InvalidParams(msg));
        for c in 0..ClassId::COUNT {
            if !(0.0..1.0).contains(&self.base_error[c]) {
                return bad(format!("base_error[{c}] must lie in [0, 1)"));
            }
            if !(self.error_slope[c] >= 0.0 && self.error_slope[c].is_finite()) {
                return bad(format!("error_slope[{c}] must be finite and >= 0"));
            }
            let row = &self.confusion[c];
            if row[c] != 0.0 {
                return bad(format!("confusion[{c}][{c}] must be 0"));
            }
            if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return bad(format!("confusion row {c} has entries outside [0, 1]"));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return bad(format!("confusion row {c} sums to {sum}, expected 1"));
            }
        }
        if !(self.error_cap > 0.0 && self.error_cap <= 1.0) {
            return bad("error_cap must lie in (0, 1]".into());
        }
        if !(self.min_gsd_m_per_px > 0.0 && self.min_gsd_m_per_px.is_finite()) {
            return bad("min_gsd_m_per_px must be positive".into());
        }
        Ok(())
    }

    /// Flip probability for true class `class` at `gsd`, clamped to
    /// [0, error_cap].
    pub fn error_rate(&self, gsd: f64, class: ClassId) -> f64 {
        let c = class.code() as usize;
        (self.base_error[c] + self.error_slope[c] * (gsd - self.min_gsd_m_per_px))
            .clamp(0.0, self.error_cap)
    }
}

/// Majority-pools the cells of `gt` under `fp` into sensor pixels of size
/// `gsd`; ties break toward the lowest class code.
///
/// This is the noiseless half of [`observe`], exposed so predictions can be
/// scored against pooled ground truth at the sensor resolution.
pub fn pool(gt: &LabelGrid, fp: &Rect, gsd: f64) -> Result<LabelGrid, OracleError> {
    if !(gsd >= gt.resolution()) {
        return Err(OracleError::GsdBelowBase { gsd, base: gt.resolution() });
    }
    let field = gt.rect();
    let slack = 1e-9 * gsd;
    if fp.min_x < field.min_x - slack
        || fp.min_y < field.min_y - slack
        || fp.max_x > field.max_x + slack
        || fp.max_y > field.max_y + slack
    {
        return Err(OracleError::FootprintOutside);
    }

    let nx = sensor_count(fp.width(), gsd);
    let ny = sensor_count(fp.height(), gsd);
    let mut cells = Vec::with_capacity(nx * ny);
    for py in 0..ny {
        // Sensor row 0 is the northernmost strip of the footprint.
        let y_hi = fp.max_y - py as f64 * gsd;
        let y_lo = (y_hi - gsd).max(fp.min_y);
        let souths = gt.south_span(y_lo, y_hi);
        for px in 0..nx {
            let x_lo = fp.min_x + px as f64 * gsd;
            let x_hi = (x_lo + gsd).min(fp.max_x);
            let cols = gt.col_span(x_lo, x_hi);
            let mut counts = [0usize; ClassId::COUNT];
            for south in souths.clone() {
                let row = gt.row_of_south(south);
                for col in cols.clone() {
                    counts[gt.get(row, col).code() as usize] += 1;
                }
            }
            cells.push(majority(&counts));
        }
    }
    Ok(LabelGrid::from_cells(nx, ny, gsd, (fp.min_x, fp.min_y), cells)?)
}

/// Simulated segmentation of the footprint `fp` imaged at `gsd`.
///
/// Noise is a pure function of `(params.seed, image_uid, pixel index)`:
/// re-observing the same image yields the identical grid no matter the call
/// order, and distinct images draw independent noise.
pub fn observe(
    gt: &LabelGrid,
    fp: &Rect,
    gsd: f64,
    params: &OracleParams,
    image_uid: u64,
) -> Result<LabelGrid, OracleError> {
    params.validate()?;
    let mut seg = pool(gt, fp, gsd)?;
    let rates: Vec<f64> =
        ClassId::ALL.iter().map(|&c| params.error_rate(gsd, c)).collect();
    for row in 0..seg.height() {
        for col in 0..seg.width() {
            let pixel = seg.index(row, col) as u64;
            let truth = seg.get(row, col);
            let u = rng::unit_f64(&[params.seed, image_uid, pixel, 0]);
            if u < rates[truth.code() as usize] {
                let draw = rng::unit_f64(&[params.seed, image_uid, pixel, 1]);
                seg.set(row, col, confused_class(&params.confusion, truth, draw));
            }
        }
    }
    Ok(seg)
}

/// Nearest-neighbor replication of a sensor-resolution segmentation onto the
/// base lattice: each base cell copies the sensor pixel containing its
/// center.
pub fn upsample_to_base(seg: &LabelGrid, base_resolution: f64) -> Result<LabelGrid, OracleError> {
    if !(base_resolution > 0.0) || seg.resolution() < base_resolution {
        return Err(OracleError::GsdBelowBase { gsd: seg.resolution(), base: base_resolution });
    }
    let (ext_w, ext_h) = seg.extent_m();
    let nx = sensor_count(ext_w, base_resolution);
    let ny = sensor_count(ext_h, base_resolution);
    let ratio = seg.resolution() / base_resolution;
    let sensor_index = |i: usize, limit: usize| {
        ((((i as f64 + 0.5) / ratio) + 1e-9) as usize).min(limit - 1)
    };
    let mut cells = Vec::with_capacity(nx * ny);
    for row in 0..ny {
        let south = ny - 1 - row;
        let seg_row = seg.height() - 1 - sensor_index(south, seg.height());
        for col in 0..nx {
            cells.push(seg.get(seg_row, sensor_index(col, seg.width())));
        }
    }
    Ok(LabelGrid::from_cells(nx, ny, base_resolution, seg.origin(), cells)?)
}

/// Number of sensor pixels needed to span `extent` at pitch `gsd`.
fn sensor_count(extent: f64, gsd: f64) -> usize {
    ((extent / gsd - 1e-9).ceil() as usize).max(1)
}

fn majority(counts: &[usize; ClassId::COUNT]) -> ClassId {
    debug_assert!(counts.iter().any(|&n| n > 0), "sensor pixel covers no cells");
    let mut best = ClassId::Soil;
    let mut best_count = counts[0];
    for &c in &ClassId::ALL[1..] {
        if counts[c.code() as usize] > best_count {
            best = c;
            best_count = counts[c.code() as usize];
        }
    }
    best
}

fn confused_class(
    confusion: &[[f64; ClassId::COUNT]; ClassId::COUNT],
    truth: ClassId,
    draw: f64,
) -> ClassId {
    let row = &confusion[truth.code() as usize];
    let mut cum = 0.0;
    let mut fallback = truth;
    for c in ClassId::ALL {
        let p = row[c.code() as usize];
        if p > 0.0 {
            cum += p;
            fallback = c;
            if draw < cum {
                return c;
            }
        }
    }
    fallback
}
