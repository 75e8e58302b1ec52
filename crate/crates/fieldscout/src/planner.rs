//! The descend-or-continue decision function.
//!
//! Offline, a training flight over a ground-truthed field builds two
//! observation sets: O pairs vegetation-ratio drops with altitude drops, I
//! pairs them with accuracy gains. Both are modeled by GPs over the ratio
//! drop. Online, only O keeps growing (I would need ground truth), so the
//! accuracy gate stays frozen while the altitude regression adapts.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{CameraModel, CameraError, GsdLadder};
use crate::field::LabelGrid;
use crate::gp::{self, GpError, GpModel, Hyperparams, SearchSpace};
use crate::metrics::{self, MetricsError};
use crate::oracle::{self, OracleError, OracleParams};
use crate::rng;

/// Tags the deterministic image-noise stream of training flights. Mission
/// images use the same (region, rung, child) scheme, so identical geometry
/// sees identical noise across strategies.
const TRAINING_STREAM: u64 = 0x494e4954;

#[derive(Debug, Error)]
pub enum PlannerError {
    #[error("degenerate training field: {0}")]
    DegenerateTrainingField(&'static str),
    #[error("training field fits only {regions} survey footprints, need at least 4")]
    FieldTooSmall { regions: usize },
    #[error("invalid observation: {0}")]
    InvalidObservation(&'static str),
    #[error("invalid decision state: {0}")]
    InvalidState(String),
    #[error(transparent)]
    Gp(#[from] GpError),
    #[error(transparent)]
    Camera(#[from] CameraError),
    #[error(transparent)]
    Field(#[from] crate::field::FieldError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("state file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("state file: {0}")]
    Encode(#[from] toml::ser::Error),
}

/// One survey-vs-descent comparison of a region.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Observation {
    pub region_id: usize,
    /// Vegetation ratio seen at the survey altitude.
    pub v_hmax: f64,
    pub gsd_child: f64,
    /// v_hmax minus the ratio seen at the child altitude.
    pub delta_v: f64,
    /// Survey altitude minus child altitude, meters.
    pub delta_h: f64,
    /// Survey mIoU minus child mIoU; only training flights know it.
    pub delta_miou: Option<f64>,
}

/// Knobs of [`initialize`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitParams {
    /// Percentile of regional survey ratios taken as v_lo.
    pub v_lo_percentile: f64,
    /// Percentile taken as v_hi.
    pub v_hi_percentile: f64,
    /// Minimum predicted mIoU gain before a descent is considered.
    pub gain_threshold: f64,
    /// Hyperparameters are re-optimized every this many adaptations.
    pub refit_period: u32,
    pub search_space: SearchSpace,
}

impl Default for InitParams {
    fn default() -> InitParams {
        InitParams {
            v_lo_percentile: 25.0,
            v_hi_percentile: 90.0,
            gain_threshold: 0.0,
            refit_period: 5,
            search_space: SearchSpace::default(),
        }
    }
}

impl InitParams {
    fn validate(&self) -> Result<(), PlannerError> {
        if !(0.0..=100.0).contains(&self.v_lo_percentile)
            || !(0.0..=100.0).contains(&self.v_hi_percentile)
            || self.v_lo_percentile >= self.v_hi_percentile
        {
            return Err(PlannerError::InvalidState(
                "percentiles must satisfy 0 <= lo < hi <= 100".into(),
            ));
        }
        if !self.gain_threshold.is_finite() {
            return Err(PlannerError::InvalidState("gain_threshold must be finite".into()));
        }
        if self.refit_period == 0 {
            return Err(PlannerError::InvalidState("refit_period must be at least 1".into()));
        }
        Ok(())
    }
}

/// What to do after a survey image.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "action")]
pub enum DecisionAction {
    Continue,
    Descend { target_gsd: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    #[serde(flatten)]
    pub action: DecisionAction,
    /// Predicted mIoU gain of descending (0 below the activity range).
    pub predicted_gain: f64,
}

/// Serializable content of a [`DecisionState`]; the GPs are refit from it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecisionStateData {
    /// (delta_v, delta_h) pairs; grows online.
    pub set_o: Vec<(f64, f64)>,
    /// (delta_v, delta_miou) pairs; frozen after initialization.
    pub set_i: Vec<(f64, f64)>,
    pub gp_o_hyper: Hyperparams,
    pub gp_i_hyper: Hyperparams,
    pub ladder: GsdLadder,
    pub v_lo: f64,
    pub v_hi: f64,
    /// Expected ratio drop per unit of observed ratio; links a survey ratio
    /// to the GPs' delta_v axis.
    pub proxy_alpha: f64,
    pub gain_threshold: f64,
    pub refit_period: u32,
    pub updates_since_refit: u32,
    /// Meters of altitude per m/px of GSD for the mission camera.
    pub altitude_per_gsd: f64,
    pub search_space: SearchSpace,
}

/// Fitted planner state: the observation sets, their GPs, and the decision
/// thresholds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DecisionStateData", into = "DecisionStateData")]
pub struct DecisionState {
    data: DecisionStateData,
    gp_o: GpModel,
    gp_i: GpModel,
}

impl TryFrom<DecisionStateData> for DecisionState {
    type Error = PlannerError;

    fn try_from(data: DecisionStateData) -> Result<DecisionState, PlannerError> {
        let bad = |msg: &str| Err(PlannerError::InvalidState(msg.into()));
        if data.set_o.is_empty() || data.set_i.is_empty() {
            return bad("observation sets must be non-empty");
        }
        if !(0.0 <= data.v_lo && data.v_lo < data.v_hi && data.v_hi <= 1.0) {
            return bad("activity range must satisfy 0 <= v_lo < v_hi <= 1");
        }
        if !data.proxy_alpha.is_finite() || !data.gain_threshold.is_finite() {
            return bad("proxy_alpha and gain_threshold must be finite");
        }
        if data.refit_period == 0 {
            return bad("refit_period must be at least 1");
        }
        if !(data.altitude_per_gsd > 0.0 && data.altitude_per_gsd.is_finite()) {
            return bad("altitude_per_gsd must be positive");
        }
        let (dv_o, dh): (Vec<f64>, Vec<f64>) = data.set_o.iter().copied().unzip();
        let (dv_i, dm): (Vec<f64>, Vec<f64>) = data.set_i.iter().copied().unzip();
        let gp_o = GpModel::fit(&dv_o, &dh, data.gp_o_hyper)?;
        let gp_i = GpModel::fit(&dv_i, &dm, data.gp_i_hyper)?;
        Ok(DecisionState { data, gp_o, gp_i })
    }
}

impl From<DecisionState> for DecisionStateData {
    fn from(state: DecisionState) -> DecisionStateData {
        state.data
    }
}

impl DecisionState {
    pub fn data(&self) -> &DecisionStateData {
        &self.data
    }

    pub fn set_o(&self) -> &[(f64, f64)] {
        &self.data.set_o
    }

    pub fn set_i(&self) -> &[(f64, f64)] {
        &self.data.set_i
    }

    pub fn gp_o(&self) -> &GpModel {
        &self.gp_o
    }

    /// Frozen accuracy-gain GP; never changes after initialization.
    pub fn gp_i(&self) -> &GpModel {
        &self.gp_i
    }

    pub fn ladder(&self) -> &GsdLadder {
        &self.data.ladder
    }

    pub fn v_lo(&self) -> f64 {
        self.data.v_lo
    }

    pub fn v_hi(&self) -> f64 {
        self.data.v_hi
    }

    pub fn proxy_alpha(&self) -> f64 {
        self.data.proxy_alpha
    }

    pub fn updates_since_refit(&self) -> u32 {
        self.data.updates_since_refit
    }

    /// Survey altitude in meters.
    pub fn survey_altitude(&self) -> f64 {
        self.data.altitude_per_gsd * self.data.ladder.survey()
    }

    fn rung_altitude(&self, gsd: f64) -> f64 {
        self.data.altitude_per_gsd * gsd
    }

    /// Maps an observed survey ratio onto the GPs' delta_v axis, clamped to
    /// the span of the recorded observations.
    fn proxy_delta_v(&self, v: f64) -> f64 {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &(dv, _) in &self.data.set_o {
            lo = lo.min(dv);
            hi = hi.max(dv);
        }
        (self.data.proxy_alpha * v).clamp(lo, hi)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<(), PlannerError> {
        let text = toml::to_string_pretty(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<DecisionState, PlannerError> {
        let text = std::fs::read_to_string(path)?;
        Ok(toml::from_str(&text)?)
    }
}

/// Builds the initial [`DecisionState`] from a training flight over a field
/// with known ground truth.
///
/// Every survey region is re-scouted at every finer rung; each (region,
/// rung) pair contributes one record to both observation sets. Accuracy is
/// scored on the base-resolution lattice so rungs are comparable.
pub fn initialize(
    gt: &LabelGrid,
    cam: &CameraModel,
    ladder: &GsdLadder,
    oracle_params: &OracleParams,
    params: &InitParams,
) -> Result<DecisionState, PlannerError> {
    params.validate()?;
    oracle_params.validate()?;
    if metrics::vegetation_ratio(gt) == 0.0 {
        return Err(PlannerError::DegenerateTrainingField("no vegetation in ground truth"));
    }
    let survey = cam.survey_grid(&gt.rect(), ladder.survey())?;
    if survey.len() < 4 {
        return Err(PlannerError::FieldTooSmall { regions: survey.len() });
    }

    let mut observations = Vec::new();
    let mut region_ratios = Vec::with_capacity(survey.len());
    for (region, wp) in survey.iter().enumerate() {
        let fp = cam.footprint(wp);
        let region_gt = gt.crop_window(&fp)?;
        let survey_uid = rng::hash_words(&[TRAINING_STREAM, region as u64, 0, 0]);
        let survey_seg =
            oracle::observe(gt, &fp, ladder.survey(), oracle_params, survey_uid)?;
        let v_hmax = metrics::vegetation_ratio(&survey_seg);
        region_ratios.push(v_hmax);
        let miou_hmax = scored_on_base(&[(survey_seg, fp)], ladder.survey(), &region_gt)?;

        for (rung, &gsd_child) in ladder.rungs().iter().enumerate().skip(1) {
            let children = cam.inspection_grid(wp, gsd_child, (fp.min_x, fp.min_y))?;
            let mut veg = 0usize;
            let mut total = 0usize;
            let mut segs = Vec::with_capacity(children.len());
            for (child, cwp) in children.iter().enumerate() {
                let cfp = cam.footprint(cwp);
                let uid = rng::hash_words(&[
                    TRAINING_STREAM,
                    region as u64,
                    rung as u64,
                    child as u64 + 1,
                ]);
                let seg = oracle::observe(gt, &cfp, gsd_child, oracle_params, uid)?;
                let counts = seg.class_counts();
                veg += counts[1] + counts[2];
                total += seg.cell_count();
                segs.push((seg, cfp));
            }
            let v_child = veg as f64 / total as f64;
            let miou_child = scored_on_base(&segs, gsd_child, &region_gt)?;
            observations.push(Observation {
                region_id: region,
                v_hmax,
                gsd_child,
                delta_v: v_hmax - v_child,
                delta_h: cam.altitude_at_gsd(ladder.survey())?
                    - cam.altitude_at_gsd(gsd_child)?,
                delta_miou: Some(miou_hmax - miou_child),
            });
        }
    }

    let with_veg: Vec<&Observation> =
        observations.iter().filter(|o| o.v_hmax > 0.0).collect();
    if with_veg.is_empty() {
        return Err(PlannerError::DegenerateTrainingField(
            "no vegetation visible at the survey altitude",
        ));
    }
    let mean_dv: f64 =
        with_veg.iter().map(|o| o.delta_v).sum::<f64>() / with_veg.len() as f64;
    let mean_v: f64 =
        with_veg.iter().map(|o| o.v_hmax).sum::<f64>() / with_veg.len() as f64;
    let proxy_alpha = mean_dv / mean_v;

    let mut sorted = region_ratios.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let v_lo = percentile(&sorted, params.v_lo_percentile);
    let v_hi = percentile(&sorted, params.v_hi_percentile);
    if !(v_lo < v_hi) {
        return Err(PlannerError::DegenerateTrainingField(
            "survey ratios give an empty activity range",
        ));
    }

    let set_o: Vec<(f64, f64)> = observations.iter().map(|o| (o.delta_v, o.delta_h)).collect();
    let set_i: Vec<(f64, f64)> = observations
        .iter()
        .map(|o| (o.delta_v, o.delta_miou.expect("training records carry delta_miou")))
        .collect();
    let (dv_o, dh): (Vec<f64>, Vec<f64>) = set_o.iter().copied().unzip();
    let (dv_i, dm): (Vec<f64>, Vec<f64>) = set_i.iter().copied().unzip();
    let gp_o_hyper = gp::optimize_hyperparams(&dv_o, &dh, &params.search_space)?;
    let gp_i_hyper = gp::optimize_hyperparams(&dv_i, &dm, &params.search_space)?;

    DecisionState::try_from(DecisionStateData {
        set_o,
        set_i,
        gp_o_hyper,
        gp_i_hyper,
        ladder: ladder.clone(),
        v_lo,
        v_hi,
        proxy_alpha,
        gain_threshold: params.gain_threshold,
        refit_period: params.refit_period,
        updates_since_refit: 0,
        altitude_per_gsd: cam.altitude_per_gsd(),
        search_space: params.search_space.clone(),
    })
}

/// Fuses segmentations onto the region's base lattice and scores them.
fn scored_on_base(
    segs: &[(LabelGrid, crate::geom::Rect)],
    gsd: f64,
    region_gt: &LabelGrid,
) -> Result<f64, PlannerError> {
    let mut fused = metrics::FusedMap::new(region_gt);
    for (seg, fp) in segs {
        let up = oracle::upsample_to_base(seg, region_gt.resolution())?;
        fused.fuse(&up, gsd, fp)?;
    }
    Ok(fused.field_stats(region_gt)?.miou)
}

/// Linearly interpolated percentile of pre-sorted values.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let rank = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = rank - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// The runtime descend-or-continue decision for a survey image whose
/// vegetation ratio is `v`.
pub fn decide(state: &DecisionState, v: f64) -> Decision {
    let data = &state.data;
    if v < data.v_lo {
        return Decision { action: DecisionAction::Continue, predicted_gain: 0.0 };
    }
    let dv = state.proxy_delta_v(v);
    let predicted_gain = -state.gp_i.predict_one(dv).0;
    if predicted_gain <= data.gain_threshold {
        return Decision { action: DecisionAction::Continue, predicted_gain };
    }
    if v >= data.v_hi {
        let target_gsd = data.ladder.finest();
        return Decision { action: DecisionAction::Descend { target_gsd }, predicted_gain };
    }
    let predicted_drop = state.gp_o.predict_one(dv).0;
    let h_max = state.survey_altitude();
    let h_finest = state.rung_altitude(data.ladder.finest());
    let target_alt = (h_max - predicted_drop).clamp(h_finest, h_max);
    let target_gsd = snap_to_rung(&data.ladder, |g| (state.rung_altitude(g) - target_alt).abs());
    if target_gsd == data.ladder.survey() {
        return Decision { action: DecisionAction::Continue, predicted_gain };
    }
    Decision { action: DecisionAction::Descend { target_gsd }, predicted_gain }
}

/// Rung minimizing `distance`; the coarser rung wins ties.
fn snap_to_rung(ladder: &GsdLadder, distance: impl Fn(f64) -> f64) -> f64 {
    let mut best = ladder.survey();
    let mut best_d = distance(best);
    for &g in &ladder.rungs()[1..] {
        let d = distance(g);
        if d < best_d {
            best = g;
            best_d = d;
        }
    }
    best
}

/// Records an executed descent and refits the altitude GP; hyperparameters
/// are re-optimized on every `refit_period`-th call. The accuracy GP and its
/// set are untouched. Returns the successor state.
pub fn record_and_adapt(
    state: &DecisionState,
    obs: &Observation,
) -> Result<DecisionState, PlannerError> {
    if !(obs.delta_h > 0.0) {
        return Err(PlannerError::InvalidObservation("delta_h must be positive"));
    }
    if !(obs.gsd_child < state.data.ladder.survey()) {
        return Err(PlannerError::InvalidObservation(
            "gsd_child must be finer than the survey rung",
        ));
    }
    if !obs.delta_v.is_finite() {
        return Err(PlannerError::InvalidObservation("delta_v must be finite"));
    }
    let mut data = state.data.clone();
    data.set_o.push((obs.delta_v, obs.delta_h));
    data.updates_since_refit += 1;
    let (dv, dh): (Vec<f64>, Vec<f64>) = data.set_o.iter().copied().unzip();
    if data.updates_since_refit >= data.refit_period {
        data.gp_o_hyper = gp::optimize_hyperparams(&dv, &dh, &data.search_space)?;
        data.updates_since_refit = 0;
    }
    let gp_o = GpModel::fit(&dv, &dh, data.gp_o_hyper)?;
    Ok(DecisionState { gp_o, gp_i: state.gp_i.clone(), data })
}

/// Ratio-to-rung baseline: linear in GSD across the activity range, no
/// learned model.
pub fn decide_linear(v: f64, v_lo: f64, v_hi: f64, ladder: &GsdLadder) -> Decision {
    if v <= v_lo {
        return Decision { action: DecisionAction::Continue, predicted_gain: 0.0 };
    }
    if v >= v_hi {
        return Decision {
            action: DecisionAction::Descend { target_gsd: ladder.finest() },
            predicted_gain: 0.0,
        };
    }
    let t = (v - v_lo) / (v_hi - v_lo);
    let target = ladder.survey() + t * (ladder.finest() - ladder.survey());
    let target_gsd = snap_to_rung(ladder, |g| (g - target).abs());
    if target_gsd == ladder.survey() {
        return Decision { action: DecisionAction::Continue, predicted_gain: 0.0 };
    }
    Decision { action: DecisionAction::Descend { target_gsd }, predicted_gain: 0.0 }
}
