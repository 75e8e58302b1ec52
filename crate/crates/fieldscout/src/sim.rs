//! Full-mission execution: waypoint traversal, observation, fusion, the
//! per-region decision hook, and trapezoidal travel-time accounting.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{CameraError, CameraModel, GsdLadder, Waypoint};
use crate::field::{FieldError, LabelGrid};
use crate::metrics::{self, FusedMap, MetricsError, SegStats};
use crate::oracle::{self, OracleError, OracleParams};
use crate::planner::{self, DecisionAction, DecisionState, Observation, PlannerError};
use crate::rng;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("leg distance must be non-negative, got {0}")]
    NegativeDistance(f64),
    #[error("time model: {0} must be positive and finite")]
    InvalidTimeModel(&'static str),
    #[error("unknown strategy {0:?} (expected fixed:<cm_per_px>, non_adaptive, adaptive, linear)")]
    UnknownStrategy(String),
    #[error("fixed gsd {0} m/px is not a ladder rung")]
    FixedGsdNotOnLadder(f64),
    #[error("strategy {0} requires a decision state")]
    MissingState(&'static str),
    #[error("fixed-strategy scoring requires ground truth")]
    MissingGroundTruth,
    #[error("decision state disagrees with the mission {0}")]
    InconsistentState(&'static str),
    #[error(transparent)]
    Camera(#[from] CameraError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Planner(#[from] PlannerError),
}

/// Point-to-point travel dynamics: accelerate from rest, cruise at the cap,
/// decelerate to rest.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeModel {
    /// Cruise speed cap, m/s.
    pub v_max: f64,
    /// Acceleration magnitude, m/s^2.
    pub a_max: f64,
    /// Hover-and-shoot cost per image, seconds.
    pub image_overhead_s: f64,
}

impl Default for TimeModel {
    fn default() -> TimeModel {
        TimeModel { v_max: 5.0, a_max: 2.0, image_overhead_s: 5.0 }
    }
}

impl TimeModel {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.v_max > 0.0 && self.v_max.is_finite()) {
            return Err(SimError::InvalidTimeModel("v_max"));
        }
        if !(self.a_max > 0.0 && self.a_max.is_finite()) {
            return Err(SimError::InvalidTimeModel("a_max"));
        }
        if !(self.image_overhead_s > 0.0 && self.image_overhead_s.is_finite()) {
            return Err(SimError::InvalidTimeModel("image_overhead_s"));
        }
        Ok(())
    }
}

/// Seconds to fly `d` meters from rest to rest.
///
/// Long legs reach the speed cap (trapezoidal velocity profile); short legs
/// peak mid-way (triangular). The branches agree at d = v_max^2/a_max.
pub fn leg_time(d: f64, tm: &TimeModel) -> Result<f64, SimError> {
    if !(d >= 0.0) {
        return Err(SimError::NegativeDistance(d));
    }
    if d >= tm.v_max * tm.v_max / tm.a_max {
        Ok(d / tm.v_max + tm.v_max / tm.a_max)
    } else {
        Ok(2.0 * (d / tm.a_max).sqrt())
    }
}

/// Mission policy. The fixed strategies fly plain coverage at one rung; the
/// other three add a per-region descend-or-continue hook.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Strategy {
    /// Plain lawn-mower coverage at this GSD (m/px; must be a ladder rung).
    Fixed { gsd: f64 },
    /// Decision function with the state frozen as initialized.
    NonAdaptive,
    /// Decision function plus online adaptation after every descent.
    Adaptive,
    /// Ratio-to-rung interpolation baseline.
    Linear,
}

impl Strategy {
    pub fn label(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::Fixed { gsd } => {
                let cm = gsd * 100.0;
                if (cm - cm.round()).abs() < 1e-9 {
                    write!(f, "fixed:{cm:.1}")
                } else {
                    write!(f, "fixed:{cm}")
                }
            }
            Strategy::NonAdaptive => write!(f, "non_adaptive"),
            Strategy::Adaptive => write!(f, "adaptive"),
            Strategy::Linear => write!(f, "linear"),
        }
    }
}

impl FromStr for Strategy {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Strategy, SimError> {
        match s {
            "non_adaptive" => return Ok(Strategy::NonAdaptive),
            "adaptive" => return Ok(Strategy::Adaptive),
            "linear" => return Ok(Strategy::Linear),
            _ => {}
        }
        if let Some(cm) = s.strip_prefix("fixed:") {
            let cm: f64 = cm.trim().parse().map_err(|_| SimError::UnknownStrategy(s.into()))?;
            if !(cm > 0.0 && cm.is_finite()) {
                return Err(SimError::UnknownStrategy(s.into()));
            }
            return Ok(Strategy::Fixed { gsd: cm / 100.0 });
        }
        Err(SimError::UnknownStrategy(s.into()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Continue,
    Descend,
}

/// One record of the mission log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MissionEvent {
    /// Travel leg; `from`/`to` are (x, y, altitude) meters.
    Fly { from: [f64; 3], to: [f64; 3], seconds: f64 },
    /// One observation. `miou` is scored against pooled ground truth at the
    /// image's native resolution, when ground truth is available.
    Image { x: f64, y: f64, altitude_m: f64, gsd: f64, v: f64, miou: Option<f64> },
    /// Outcome of the decision hook at a survey waypoint.
    Decision { v: f64, action: ActionKind, target_gsd: Option<f64>, predicted_gain: f64 },
    /// Online update of the altitude GP after a descent (adaptive only).
    Adapt { delta_v: f64, delta_h: f64 },
}

/// Everything a mission produced.
#[derive(Debug)]
pub struct MissionTrace {
    pub strategy: String,
    pub seed: u64,
    pub events: Vec<MissionEvent>,
    /// Sum of fly seconds plus image_overhead_s per image event.
    pub total_time_s: f64,
    /// Base-resolution fused label map (finest GSD wins per cell).
    pub fused: FusedMap,
    /// Whole-field score of the fused map, when ground truth was given.
    pub field_stats: Option<SegStats>,
    /// Post-mission decision state (evolved only by the adaptive strategy).
    pub final_state: Option<DecisionState>,
}

impl MissionTrace {
    pub fn n_images(&self) -> usize {
        self.events.iter().filter(|e| matches!(e, MissionEvent::Image { .. })).count()
    }

    pub fn n_descents(&self) -> usize {
        self.events
            .iter()
            .filter(|e| matches!(e, MissionEvent::Decision { action: ActionKind::Descend, .. }))
            .count()
    }

    /// Per-image (gsd, mIoU) pairs, in flight order; empty without ground
    /// truth.
    pub fn per_image(&self) -> Vec<(f64, f64)> {
        self.events
            .iter()
            .filter_map(|e| match e {
                MissionEvent::Image { gsd, miou: Some(m), .. } => Some((*gsd, *m)),
                _ => None,
            })
            .collect()
    }

    /// The trace as JSON Lines: a meta line, one line per event, a summary
    /// line. Byte-identical for identical missions.
    pub fn to_jsonl(&self) -> String {
        #[derive(Serialize)]
        struct Meta<'a> {
            r#type: &'static str,
            strategy: &'a str,
            seed: u64,
        }
        #[derive(Serialize)]
        struct Summary {
            r#type: &'static str,
            total_time_s: f64,
            n_images: usize,
            n_descents: usize,
            field_miou: Option<f64>,
            coverage: f64,
        }
        let mut out = String::new();
        let meta = Meta { r#type: "meta", strategy: &self.strategy, seed: self.seed };
        out.push_str(&serde_json::to_string(&meta).expect("meta serializes"));
        out.push('\n');
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("event serializes"));
            out.push('\n');
        }
        let summary = Summary {
            r#type: "summary",
            total_time_s: self.total_time_s,
            n_images: self.n_images(),
            n_descents: self.n_descents(),
            field_miou: self.field_stats.as_ref().map(|s| s.miou),
            coverage: self.fused.coverage(),
        };
        out.push_str(&serde_json::to_string(&summary).expect("summary serializes"));
        out.push('\n');
        out
    }
}

struct MissionRun<'a> {
    field: &'a LabelGrid,
    gt: Option<&'a LabelGrid>,
    cam: &'a CameraModel,
    oracle: OracleParams,
    tm: &'a TimeModel,
    events: Vec<MissionEvent>,
    fused: FusedMap,
    fly_s: f64,
    n_images: usize,
    pos: Waypoint,
}

impl MissionRun<'_> {
    fn fly_to(&mut self, wp: &Waypoint) -> Result<(), SimError> {
        let seconds = leg_time(self.pos.distance_to(wp), self.tm)?;
        self.events.push(MissionEvent::Fly {
            from: [self.pos.x(), self.pos.y(), self.pos.altitude_m()],
            to: [wp.x(), wp.y(), wp.altitude_m()],
            seconds,
        });
        self.fly_s += seconds;
        self.pos = *wp;
        Ok(())
    }

    /// Observe from `wp`, fuse onto the base map, log the image event.
    /// Returns the segmentation for ratio bookkeeping.
    fn shoot(&mut self, wp: &Waypoint, uid: u64) -> Result<LabelGrid, SimError> {
        let fp = self.cam.footprint(wp);
        let seg = oracle::observe(self.field, &fp, wp.gsd(), &self.oracle, uid)?;
        let v = metrics::vegetation_ratio(&seg);
        let miou = match self.gt {
            Some(gt) => {
                let pooled = oracle::pool(gt, &fp, wp.gsd())?;
                Some(metrics::miou(&seg, &pooled)?.miou)
            }
            None => None,
        };
        let up = oracle::upsample_to_base(&seg, self.field.resolution())?;
        self.fused.fuse(&up, wp.gsd(), &fp)?;
        self.events.push(MissionEvent::Image {
            x: wp.x(),
            y: wp.y(),
            altitude_m: wp.altitude_m(),
            gsd: wp.gsd(),
            v,
            miou,
        });
        self.n_images += 1;
        Ok(seg)
    }
}

fn rung_index(ladder: &GsdLadder, gsd: f64) -> Option<usize> {
    ladder.rungs().iter().position(|&r| (r - gsd).abs() < 1e-12)
}

/// Flies one mission and returns its trace.
///
/// `field` drives the segmentation oracle; `gt` (usually the same grid) is
/// the scoring reference; without it, per-image and field mIoU are omitted.
/// The mission starts directly above the first waypoint at zero time cost.
/// Traces are deterministic in (inputs, seed); across strategies with equal
/// `seed`, coincident images see identical noise.
#[allow(clippy::too_many_arguments)]
pub fn run_mission(
    field: &LabelGrid,
    gt: Option<&LabelGrid>,
    cam: &CameraModel,
    ladder: &GsdLadder,
    oracle_params: &OracleParams,
    tm: &TimeModel,
    strategy: &Strategy,
    state: Option<&DecisionState>,
    seed: u64,
) -> Result<MissionTrace, SimError> {
    tm.validate()?;
    oracle_params.validate()?;
    let survey_gsd = match *strategy {
        Strategy::Fixed { gsd } => {
            if gt.is_none() {
                return Err(SimError::MissingGroundTruth);
            }
            // Snap to the exact rung so altitudes match other strategies.
            let idx =
                rung_index(ladder, gsd).ok_or(SimError::FixedGsdNotOnLadder(gsd))?;
            ladder.rungs()[idx]
        }
        Strategy::NonAdaptive | Strategy::Adaptive | Strategy::Linear => ladder.survey(),
    };
    let needs_state = !matches!(strategy, Strategy::Fixed { .. });
    let mut st: Option<DecisionState> = match (needs_state, state) {
        (false, _) => None,
        (true, Some(s)) => {
            if s.ladder() != ladder {
                return Err(SimError::InconsistentState("ladder"));
            }
            let apg = s.data().altitude_per_gsd;
            if (apg - cam.altitude_per_gsd()).abs() > 1e-9 * apg.max(1.0) {
                return Err(SimError::InconsistentState("camera"));
            }
            Some(s.clone())
        }
        (true, None) => {
            return Err(SimError::MissingState(match strategy {
                Strategy::NonAdaptive => "non_adaptive",
                Strategy::Adaptive => "adaptive",
                _ => "linear",
            }));
        }
    };

    let grid = cam.survey_grid(&field.rect(), survey_gsd)?;
    let survey_rung = rung_index(ladder, survey_gsd).expect("survey gsd snapped to a rung");
    let oracle_eff = OracleParams {
        seed: rng::hash_words(&[oracle_params.seed, seed]),
        ..oracle_params.clone()
    };
    let mut run = MissionRun {
        field,
        gt,
        cam,
        oracle: oracle_eff,
        tm,
        events: Vec::new(),
        fused: FusedMap::new(field),
        fly_s: 0.0,
        n_images: 0,
        pos: grid[0],
    };
    // Entry leg: the mission starts on station above the first waypoint.
    run.fly_to(&grid[0])?;

    for (region, wp) in grid.iter().enumerate() {
        if region > 0 {
            run.fly_to(wp)?;
        }
        let uid = rng::hash_words(&[region as u64, survey_rung as u64, 0]);
        let seg = run.shoot(wp, uid)?;
        let v = metrics::vegetation_ratio(&seg);

        let decision = match strategy {
            Strategy::Fixed { .. } => None,
            Strategy::NonAdaptive | Strategy::Adaptive => {
                Some(planner::decide(st.as_ref().expect("state checked"), v))
            }
            Strategy::Linear => {
                let s = st.as_ref().expect("state checked");
                Some(planner::decide_linear(v, s.v_lo(), s.v_hi(), s.ladder()))
            }
        };
        let Some(decision) = decision else { continue };
        let (action, target_gsd) = match decision.action {
            DecisionAction::Continue => (ActionKind::Continue, None),
            DecisionAction::Descend { target_gsd } => (ActionKind::Descend, Some(target_gsd)),
        };
        run.events.push(MissionEvent::Decision {
            v,
            action,
            target_gsd,
            predicted_gain: decision.predicted_gain,
        });
        let Some(target) = target_gsd else { continue };

        let children =
            run.cam.inspection_grid(wp, target, (run.pos.x(), run.pos.y()))?;
        let child_rung = rung_index(ladder, target).expect("decide returns ladder rungs");
        let mut veg = 0usize;
        let mut total = 0usize;
        for (child, cwp) in children.iter().enumerate() {
            run.fly_to(cwp)?;
            let uid = rng::hash_words(&[
                region as u64,
                child_rung as u64,
                child as u64 + 1,
            ]);
            let cseg = run.shoot(cwp, uid)?;
            let counts = cseg.class_counts();
            veg += counts[1] + counts[2];
            total += cseg.cell_count();
        }
        if matches!(strategy, Strategy::Adaptive) {
            let v_child = veg as f64 / total as f64;
            let obs = Observation {
                region_id: region,
                v_hmax: v,
                gsd_child: target,
                delta_v: v - v_child,
                delta_h: wp.altitude_m() - children[0].altitude_m(),
                delta_miou: None,
            };
            let current = st.as_ref().expect("state checked");
            st = Some(planner::record_and_adapt(current, &obs)?);
            run.events.push(MissionEvent::Adapt {
                delta_v: obs.delta_v,
                delta_h: obs.delta_h,
            });
        }
    }

    let total_time_s = run.fly_s + tm.image_overhead_s * run.n_images as f64;
    let field_stats = match gt {
        Some(gt) => Some(run.fused.field_stats(gt)?),
        None => None,
    };
    Ok(MissionTrace {
        strategy: strategy.label(),
        seed,
        events: run.events,
        total_time_s,
        fused: run.fused,
        field_stats,
        final_state: st,
    })
}

/// One row of the strategy comparison table.
#[derive(Clone, Debug, PartialEq)]
pub struct CompareRow {
    pub strategy: String,
    pub seed: u64,
    pub field_miou: f64,
    pub total_time_s: f64,
    pub n_images: usize,
    pub n_descents: usize,
    /// (gsd, per-image mIoU) for every image, in flight order.
    pub per_image: Vec<(f64, f64)>,
}

/// Runs the full strategy x seed matrix over one field.
///
/// All strategies share the oracle noise of their (field, seed) pair, so
/// coincident images are identical across strategies. Rows come out in
/// (strategy list order, seed list order), independent of execution order.
#[allow(clippy::too_many_arguments)]
pub fn compare_strategies(
    field: &LabelGrid,
    gt: &LabelGrid,
    cam: &CameraModel,
    ladder: &GsdLadder,
    oracle_params: &OracleParams,
    tm: &TimeModel,
    strategies: &[Strategy],
    state: Option<&DecisionState>,
    seeds: &[u64],
) -> Result<Vec<CompareRow>, SimError> {
    let mut rows = Vec::with_capacity(strategies.len() * seeds.len());
    for strategy in strategies {
        for &seed in seeds {
            let trace = run_mission(
                field,
                Some(gt),
                cam,
                ladder,
                oracle_params,
                tm,
                strategy,
                state,
                seed,
            )?;
            rows.push(CompareRow {
                strategy: trace.strategy.clone(),
                seed,
                field_miou: trace.field_stats.as_ref().expect("gt given").miou,
                total_time_s: trace.total_time_s,
                n_images: trace.n_images(),
                n_descents: trace.n_descents(),
                per_image: trace.per_image(),
            });
        }
    }
    Ok(rows)
}

/// Per-rung aggregate of per-image scores.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RungStats {
    pub gsd: f64,
    pub mean_miou: f64,
    /// Population standard deviation (well-defined for n = 1).
    pub std_miou: f64,
    pub n: usize,
}

/// Groups (gsd, mIoU) pairs by rung, coarse to fine. Pairs whose GSD is not
/// a ladder rung are ignored.
pub fn per_rung_stats(ladder: &GsdLadder, per_image: &[(f64, f64)]) -> Vec<RungStats> {
    ladder
        .rungs()
        .iter()
        .filter_map(|&rung| {
            let scores: Vec<f64> = per_image
                .iter()
                .filter(|(g, _)| (g - rung).abs() < 1e-12)
                .map(|&(_, m)| m)
                .collect();
            if scores.is_empty() {
                return None;
            }
            let n = scores.len();
            let mean = scores.iter().sum::<f64>() / n as f64;
            let var = scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n as f64;
            Some(RungStats { gsd: rung, mean_miou: mean, std_miou: var.sqrt(), n })
        })
        .collect()
}
