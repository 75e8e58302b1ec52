//! Segmentation quality metrics and highest-resolution fusion.

use thiserror::Error;

use crate::field::{ClassId, LabelGrid};
use crate::geom::Rect;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("grids differ in {0}")]
    ShapeMismatch(&'static str),
    #[error("footprint misaligned with the fused map: {0}")]
    Misaligned(String),
}

/// Per-comparison segmentation statistics.
///
/// `per_class_iou` is `None` for classes absent from both prediction and
/// ground truth; `miou` averages only the present classes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SegStats {
    /// Vegetation ratio of the prediction.
    pub vegetation_ratio: f64,
    pub per_class_iou: [Option<f64>; ClassId::COUNT],
    pub miou: f64,
    pub pixel_count: usize,
}

/// Fraction of cells labeled crop or weed.
pub fn vegetation_ratio(seg: &LabelGrid) -> f64 {
    let counts = seg.class_counts();
    (counts[ClassId::Crop.code() as usize] + counts[ClassId::Weed.code() as usize]) as f64
        / seg.cell_count() as f64
}

/// Mean intersection-over-union of `pred` against `gt`.
pub fn miou(pred: &LabelGrid, gt: &LabelGrid) -> Result<SegStats, MetricsError> {
    if pred.width() != gt.width() || pred.height() != gt.height() {
        return Err(MetricsError::ShapeMismatch("dimensions"));
    }
    if pred.resolution() != gt.resolution() {
        return Err(MetricsError::ShapeMismatch("resolution"));
    }
    let mut inter = [0usize; ClassId::COUNT];
    let mut union = [0usize; ClassId::COUNT];
    for (&p, &g) in pred.cells().iter().zip(gt.cells()) {
        if p == g {
            inter[p.code() as usize] += 1;
            union[p.code() as usize] += 1;
        } else {
            union[p.code() as usize] += 1;
            union[g.code() as usize] += 1;
        }
    }
    Ok(stats_from_counts(inter, union, vegetation_ratio(pred), pred.cell_count()))
}

fn stats_from_counts(
    inter: [usize; ClassId::COUNT],
    union: [usize; ClassId::COUNT],
    vegetation_ratio: f64,
    pixel_count: usize,
) -> SegStats {
    let mut per_class_iou = [None; ClassId::COUNT];
    let mut sum = 0.0;
    let mut present = 0usize;
    for c in 0..ClassId::COUNT {
        if union[c] > 0 {
            let iou = inter[c] as f64 / union[c] as f64;
            per_class_iou[c] = Some(iou);
            sum += iou;
            present += 1;
        }
    }
    let miou = if present > 0 { sum / present as f64 } else { 0.0 };
    SegStats { vegetation_ratio, per_class_iou, miou, pixel_count }
}

/// Base-resolution class map assembled from observations, keeping the finest
/// (smallest-GSD) observation per cell.
#[derive(Clone, Debug, PartialEq)]
pub struct FusedMap {
    labels: LabelGrid,
    /// GSD of the observation that wrote each cell; infinite where unobserved.
    provenance: Vec<f64>,
}

impl FusedMap {
    /// Empty map covering the same lattice as `base` (labels initialized to
    /// soil but marked unobserved).
    pub fn new(base: &LabelGrid) -> FusedMap {
        let labels = LabelGrid::filled(
            base.width(),
            base.height(),
            base.resolution(),
            base.origin(),
            ClassId::Soil,
        )
        .expect("base grid is valid");
        FusedMap { provenance: vec![f64::INFINITY; labels.cell_count()], labels }
    }

    pub fn labels(&self) -> &LabelGrid {
        &self.labels
    }

    pub fn provenance(&self, row: usize, col: usize) -> f64 {
        self.provenance[self.labels.index(row, col)]
    }

    pub fn observed_cells(&self) -> usize {
        self.provenance.iter().filter(|p| p.is_finite()).count()
    }

    /// Fraction of cells written by at least one observation.
    pub fn coverage(&self) -> f64 {
        self.observed_cells() as f64 / self.labels.cell_count() as f64
    }

    /// Writes `seg` labels into the cells of `fp`, keeping existing cells
    /// whose provenance is already at least as fine as `gsd_source`.
    ///
    /// `seg` must live on the map's lattice (same resolution, integer origin
    /// offset) and cover all of `fp`.
    pub fn fuse(
        &mut self,
        seg: &LabelGrid,
        gsd_source: f64,
        fp: &Rect,
    ) -> Result<(), MetricsError> {
        let res = self.labels.resolution();
        if !close(seg.resolution(), res, 1e-9) {
            return Err(MetricsError::Misaligned(format!(
                "segment resolution {} differs from base {}",
                seg.resolution(),
                res
            )));
        }
        let (mox, moy) = self.labels.origin();
        let (sox, soy) = seg.origin();
        let col_off = lattice_offset(sox - mox, res)
            .ok_or_else(|| MetricsError::Misaligned("origin x off-lattice".into()))?;
        let south_off = lattice_offset(soy - moy, res)
            .ok_or_else(|| MetricsError::Misaligned("origin y off-lattice".into()))?;

        let cols = self.labels.col_span(fp.min_x, fp.max_x);
        let souths = self.labels.south_span(fp.min_y, fp.max_y);
        for south in souths {
            let seg_south = south as i64 - south_off;
            if seg_south < 0 || seg_south as usize >= seg.height() {
                return Err(MetricsError::Misaligned(
                    "segment does not cover the footprint rows".into(),
                ));
            }
            let seg_row = seg.height() - 1 - seg_south as usize;
            let row = self.labels.row_of_south(south);
            for col in cols.clone() {
                let seg_col = col as i64 - col_off;
                if seg_col < 0 || seg_col as usize >= seg.width() {
                    return Err(MetricsError::Misaligned(
                        "segment does not cover the footprint columns".into(),
                    ));
                }
                let idx = self.labels.index(row, col);
                if gsd_source < self.provenance[idx] {
                    self.provenance[idx] = gsd_source;
                    self.labels.set(row, col, seg.get(seg_row, seg_col as usize));
                }
            }
        }
        Ok(())
    }

    /// Scores the fused map against ground truth on the full field.
    ///
    /// Unobserved cells predict nothing: they miss the intersection of every
    /// class and still enlarge the union of their true class, so gaps in
    /// coverage always cost accuracy. They also count as non-vegetation in
    /// the returned ratio.
    pub fn field_stats(&self, gt: &LabelGrid) -> Result<SegStats, MetricsError> {
        if self.labels.width() != gt.width() || self.labels.height() != gt.height() {
            return Err(MetricsError::ShapeMismatch("dimensions"));
        }
        if self.labels.resolution() != gt.resolution() {
            return Err(MetricsError::ShapeMismatch("resolution"));
        }
        let mut inter = [0usize; ClassId::COUNT];
        let mut union = [0usize; ClassId::COUNT];
        let mut veg = 0usize;
        for (idx, (&p, &g)) in self.labels.cells().iter().zip(gt.cells()).enumerate() {
            if self.provenance[idx].is_finite() {
                if p == g {
                    inter[p.code() as usize] += 1;
                    union[p.code() as usize] += 1;
                } else {
                    union[p.code() as usize] += 1;
                    union[g.code() as usize] += 1;
                }
                if p.is_vegetation() {
                    veg += 1;
                }
            } else {
                union[g.code() as usize] += 1;
            }
        }
        let n = gt.cell_count();
        Ok(stats_from_counts(inter, union, veg as f64 / n as f64, n))
    }
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * b.abs().max(1.0)
}

/// Integer lattice offset of `delta` in units of `res`, if within tolerance.
fn lattice_offset(delta: f64, res: f64) -> Option<i64> {
    let steps = delta / res;
    let rounded = steps.round();
    ((steps - rounded).abs() <= 1e-6).then_some(rounded as i64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{generate_field, FieldSpec};
    use crate::rng;

    fn grid(width: usize, height: usize, res: f64, origin: (f64, f64), codes: &[u8]) -> LabelGrid {
        let cells = codes.iter().map(|&c| ClassId::from_code(c).unwrap()).collect();
        LabelGrid::from_cells(width, height, res, origin, cells).unwrap()
    }

    fn random_grid(seed: u64, width: usize, height: usize) -> LabelGrid {
        let cells = (0..width * height)
            .map(|i| ClassId::from_code((rng::unit_f64(&[seed, i as u64]) * 3.0) as u8).unwrap())
            .collect();
        LabelGrid::from_cells(width, height, 0.01, (0.0, 0.0), cells).unwrap()
    }

    #[test]
    fn vegetation_ratio_hand_cases() {
        let soil = grid(2, 2, 1.0, (0.0, 0.0), &[0, 0, 0, 0]);
        assert_eq!(vegetation_ratio(&soil), 0.0);
        let half = grid(2, 2, 1.0, (0.0, 0.0), &[1, 2, 0, 0]);
        assert_eq!(vegetation_ratio(&half), 0.5);
    }

    #[test]
    fn vegetation_ratio_matches_naive_counter() {
        let g = random_grid(5, 64, 64);
        let mut veg = 0usize;
        let mut total = 0usize;
        for row in 0..g.height() {
            for col in 0..g.width() {
                total += 1;
                match g.get(row, col) {
                    ClassId::Crop | ClassId::Weed => veg += 1,
                    ClassId::Soil => {}
                }
            }
        }
        assert_eq!(vegetation_ratio(&g), veg as f64 / total as f64);
    }

    #[test]
    fn miou_identity_and_disjoint() {
        let g = grid(3, 1, 1.0, (0.0, 0.0), &[0, 1, 2]);
        let same = miou(&g, &g).unwrap();
        assert_eq!(same.per_class_iou, [Some(1.0); 3]);
        assert_eq!(same.miou, 1.0);
        assert_eq!(same.pixel_count, 3);

        let soil = grid(2, 2, 1.0, (0.0, 0.0), &[0, 0, 0, 0]);
        let crop = grid(2, 2, 1.0, (0.0, 0.0), &[1, 1, 1, 1]);
        let disjoint = miou(&soil, &crop).unwrap();
        assert_eq!(disjoint.per_class_iou, [Some(0.0), Some(0.0), None]);
        assert_eq!(disjoint.miou, 0.0);
    }

    #[test]
    fn miou_hand_example() {
        let pred = grid(4, 1, 1.0, (0.0, 0.0), &[0, 0, 1, 2]);
        let gt = grid(4, 1, 1.0, (0.0, 0.0), &[0, 1, 1, 2]);
        let stats = miou(&pred, &gt).unwrap();
        assert_eq!(stats.per_class_iou, [Some(0.5), Some(0.5), Some(1.0)]);
        assert_eq!(stats.miou, 2.0 / 3.0);
    }

    #[test]
    fn miou_shape_mismatch_errors() {
        let a = grid(2, 1, 1.0, (0.0, 0.0), &[0, 1]);
        let b = grid(1, 2, 1.0, (0.0, 0.0), &[0, 1]);
        assert!(miou(&a, &b).is_err());
        let c = grid(2, 1, 0.5, (0.0, 0.0), &[0, 1]);
        assert!(miou(&a, &c).is_err());
    }

    #[test]
    fn miou_is_symmetric_per_class() {
        let a = random_grid(11, 32, 16);
        let b = random_grid(12, 32, 16);
        let ab = miou(&a, &b).unwrap();
        let ba = miou(&b, &a).unwrap();
        assert_eq!(ab.per_class_iou, ba.per_class_iou);
        assert_eq!(ab.miou, ba.miou);
        assert_eq!(miou(&a, &a).unwrap().miou, 1.0);
    }

    #[test]
    fn fuse_keeps_finest_regardless_of_order() {
        let base = grid(4, 4, 0.5, (0.0, 0.0), &[0; 16]);
        let all = Rect::new(0.0, 0.0, 2.0, 2.0);
        let coarse_seg = grid(4, 4, 0.5, (0.0, 0.0), &[1; 16]);
        let fine_seg = grid(4, 4, 0.5, (0.0, 0.0), &[2; 16]);

        let mut coarse_first = FusedMap::new(&base);
        coarse_first.fuse(&coarse_seg, 0.03, &all).unwrap();
        coarse_first.fuse(&fine_seg, 0.01, &all).unwrap();
        assert!(coarse_first.labels().cells().iter().all(|&c| c == ClassId::Weed));

        let mut fine_first = FusedMap::new(&base);
        fine_first.fuse(&fine_seg, 0.01, &all).unwrap();
        fine_first.fuse(&coarse_seg, 0.03, &all).unwrap();
        assert_eq!(fine_first, coarse_first);
        assert_eq!(fine_first.coverage(), 1.0);
    }

    #[test]
    fn fuse_equal_gsd_first_write_wins() {
        let base = grid(2, 1, 1.0, (0.0, 0.0), &[0, 0]);
        let crop = grid(2, 1, 1.0, (0.0, 0.0), &[1, 1]);
        let weed = grid(2, 1, 1.0, (0.0, 0.0), &[2, 2]);
        let mut map = FusedMap::new(&base);
        let all = Rect::new(0.0, 0.0, 2.0, 1.0);
        map.fuse(&crop, 0.02, &all).unwrap();
        map.fuse(&weed, 0.02, &all).unwrap();
        assert!(map.labels().cells().iter().all(|&c| c == ClassId::Crop));
    }

    #[test]
    fn fuse_rejects_off_lattice_segments() {
        let base = grid(4, 4, 0.5, (0.0, 0.0), &[0; 16]);
        let mut map = FusedMap::new(&base);
        let shifted = grid(4, 4, 0.5, (0.3, 0.0), &[1; 16]);
        let fp = Rect::new(0.3, 0.0, 2.3, 2.0);
        assert!(matches!(map.fuse(&shifted, 0.03, &fp), Err(MetricsError::Misaligned(_))));
        let wrong_res = grid(4, 4, 0.25, (0.0, 0.0), &[1; 16]);
        assert!(matches!(
            map.fuse(&wrong_res, 0.03, &Rect::new(0.0, 0.0, 1.0, 1.0)),
            Err(MetricsError::Misaligned(_))
        ));
        // Footprint reaching past the segment's coverage is misaligned too.
        let seg = grid(2, 2, 0.5, (0.0, 0.0), &[1; 4]);
        let too_wide = Rect::new(0.0, 0.0, 2.0, 1.0);
        assert!(matches!(map.fuse(&seg, 0.03, &too_wide), Err(MetricsError::Misaligned(_))));
    }

    /// Brute-force replay oracle: interleaved fuses at three GSDs over
    /// overlapping rectangles must equal a per-cell min-GSD recomputation.
    #[test]
    fn interleaved_fusion_matches_replay_oracle() {
        let base = grid(8, 6, 0.5, (0.0, 0.0), &[0; 48]);
        let segs: Vec<(LabelGrid, f64, Rect)> = vec![
            (
                grid(8, 6, 0.5, (0.0, 0.0), &[1; 48]),
                0.03,
                Rect::new(0.0, 0.0, 4.0, 3.0),
            ),
            (
                grid(4, 4, 0.5, (1.0, 0.5), &[2; 16]),
                0.015,
                Rect::new(1.0, 0.5, 3.0, 2.5),
            ),
            (
                grid(4, 2, 0.5, (2.0, 1.5), &[0; 8]),
                0.01,
                Rect::new(2.0, 1.5, 4.0, 2.5),
            ),
        ];
        for order in [[0usize, 1, 2], [2, 1, 0], [1, 2, 0]] {
            let mut map = FusedMap::new(&base);
            for &i in &order {
                let (seg, gsd, fp) = &segs[i];
                map.fuse(seg, *gsd, fp).unwrap();
            }
            for row in 0..base.height() {
                for col in 0..base.width() {
                    let x = base.center_x(col);
                    let y = base.center_y(row);
                    let mut best: Option<(f64, ClassId)> = None;
                    for (seg, gsd, fp) in &segs {
                        if fp.contains(x, y)
                            && best.map_or(true, |(bg, _)| *gsd < bg)
                        {
                            let c = seg.crop_window(&Rect::centered(x, y, 0.4, 0.4)).unwrap();
                            best = Some((*gsd, c.get(0, 0)));
                        }
                    }
                    match best {
                        Some((gsd, class)) => {
                            assert_eq!(map.labels().get(row, col), class);
                            assert_eq!(map.provenance(row, col), gsd);
                        }
                        None => assert!(map.provenance(row, col).is_infinite()),
                    }
                }
            }
        }
    }

    #[test]
    fn field_stats_penalizes_gaps_and_rewards_coverage() {
        let spec = FieldSpec {
            extent_m: (3.0, 2.0),
            base_resolution_m_per_px: 0.05,
            row_spacing_m: 0.5,
            crop_radius_m: 0.1,
            crop_jitter_m: 0.0,
            weed_cluster_count: 2,
            weed_cluster_radius_m: 0.2,
            weed_density: 0.8,
            seed: 3,
        };
        let gt = generate_field(&spec).unwrap();
        let empty = FusedMap::new(&gt);
        let stats = empty.field_stats(&gt).unwrap();
        assert_eq!(stats.miou, 0.0);
        assert_eq!(stats.vegetation_ratio, 0.0);

        let mut full = FusedMap::new(&gt);
        full.fuse(&gt, 0.05, &gt.rect()).unwrap();
        let stats = full.field_stats(&gt).unwrap();
        assert_eq!(stats.miou, 1.0);
        assert_eq!(stats.vegetation_ratio, vegetation_ratio(&gt));

        // A half-covered perfect map scores between the two.
        let mut half = FusedMap::new(&gt);
        let left = Rect::new(0.0, 0.0, 1.5, 2.0);
        half.fuse(&gt.crop_window(&left).unwrap(), 0.05, &left).unwrap();
        let stats = half.field_stats(&gt).unwrap();
        assert!(stats.miou > 0.0 && stats.miou < 1.0);
        assert!((half.coverage() - 0.5).abs() < 1e-12);
    }
}
