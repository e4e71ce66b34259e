//! Online tracker: predict, fuse motion and appearance costs, assign, update.
//!
//! Each frame builds one fused score matrix
//! `C = w_m * (IoU + lambda * C_v) + w_a * C_a` over detections x tracks and
//! solves a single gated assignment on it. `w_a`/`w_m` come from how uniform
//! the frame's detection features are (see [`crate::appearance`]). A track
//! re-acquired after missing frames is re-updated along a straight virtual
//! path across the gap instead of a single jump.

use std::collections::VecDeque;
use std::ops::RangeInclusive;

use crate::appearance::{self, AdaptiveWeights, Feature};
use crate::assignment::{self, ScoreMatrix};
use crate::error::{Error, Result};
use crate::geometry::{iou_unchecked, BBox};
use crate::motion::{KalmanState, MotionConfig, MotionModel};
use crate::mot_io::{FrameMap, TrackFrames};

/// A detector output for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub bbox: BBox,
    pub conf: f64,
    pub feature: Option<Feature>,
}

impl Detection {
    pub fn new(bbox: BBox, conf: f64) -> Self {
        Self { bbox, conf, feature: None }
    }

    pub fn with_feature(mut self, feature: Feature) -> Self {
        self.feature = Some(feature);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerConfig {
    /// Appearance angle threshold in degrees, in `(0, 90)`.
    pub theta_deg: f64,
    /// Weight of the direction-consistency term.
    pub lambda: f64,
    /// Minimum fused score for a detection/track pair to be matched.
    pub gate: f64,
    /// Consecutive hits before a tentative track is reported.
    pub min_hits: u32,
    /// Frames a lost track survives without a match.
    pub max_age: u32,
    /// Frame span used to estimate a track's direction of motion.
    pub delta_t: u32,
    pub alpha_ema: f64,
    /// Limit `w_a` to `[0, 1]`.
    pub clamp_weights: bool,
    /// Re-update along a virtual path when a lost track is re-acquired.
    pub use_oru: bool,
    pub motion: MotionConfig,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            theta_deg: appearance::DEFAULT_THETA_DEG,
            lambda: 0.2,
            gate: 0.25,
            min_hits: 3,
            max_age: 30,
            delta_t: 3,
            alpha_ema: appearance::DEFAULT_ALPHA_EMA,
            clamp_weights: true,
            use_oru: true,
            motion: MotionConfig::default(),
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        appearance::validate_theta(self.theta_deg)?;
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::config(format!("lambda must be a non-negative number, got {}", self.lambda)));
        }
        if !self.gate.is_finite() {
            return Err(Error::config("gate must be finite"));
        }
        if self.delta_t < 1 {
            return Err(Error::config("delta_t must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.alpha_ema) {
            return Err(Error::config(format!("alpha_ema must lie in [0, 1], got {}", self.alpha_ema)));
        }
        self.motion.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackStatus {
    Tentative,
    Confirmed,
    Lost,
    Removed,
}

#[derive(Debug, Clone)]
pub struct Track {
    pub id: u64,
    pub state: KalmanState,
    /// Filter state right after the last real observation.
    pub checkpoint: KalmanState,
    pub ema_feat: Option<Feature>,
    /// Most recent observations, oldest first; holds at least `delta_t + 1`.
    pub history: VecDeque<(u32, BBox)>,
    pub hits: u32,
    pub age: u32,
    pub time_since_update: u32,
    pub status: TrackStatus,
    /// Box view of the latest prediction.
    pub predicted: BBox,
}

impl Track {
    pub fn last_observation(&self) -> (u32, BBox) {
        *self.history.back().expect("tracks are created from an observation")
    }
}

/// Direction consistency between a track's recent motion and the step to
/// `det`: cosine of the angle between (observation `delta_t` frames back ->
/// latest observation) and (latest observation -> `det`). Returns 0 when
/// either direction is undefined.
pub fn velocity_consistency(track: &Track, det: &BBox, delta_t: u32) -> f64 {
    if track.history.len() < 2 {
        return 0.0;
    }
    let (latest_frame, latest) = track.last_observation();
    let horizon = latest_frame.saturating_sub(delta_t);
    let (_, earlier) = track
        .history
        .iter()
        .rev()
        .skip(1)
        .find(|(f, _)| *f <= horizon)
        .or_else(|| track.history.front())
        .copied()
        .expect("history has at least two entries");
    let (ex, ey) = earlier.center();
    let (lx, ly) = latest.center();
    let (dx, dy) = det.center();
    let u = (lx - ex, ly - ey);
    let v = (dx - lx, dy - ly);
    let nu = u.0.hypot(u.1);
    let nv = v.0.hypot(v.1);
    if nu == 0.0 || nv == 0.0 {
        return 0.0;
    }
    ((u.0 * v.0 + u.1 * v.1) / (nu * nv)).clamp(-1.0, 1.0)
}

/// Entrywise `w_m * (iou + lambda * cv) + w_a * ca`.
pub fn fused_cost(
    iou_m: &ScoreMatrix,
    cv_m: &ScoreMatrix,
    ca_m: &ScoreMatrix,
    w: AdaptiveWeights,
    lambda: f64,
) -> Result<ScoreMatrix> {
    if iou_m.shape() != cv_m.shape() || iou_m.shape() != ca_m.shape() {
        return Err(Error::invalid(format!(
            "cost matrices differ in shape: {:?}, {:?}, {:?}",
            iou_m.shape(),
            cv_m.shape(),
            ca_m.shape()
        )));
    }
    let (rows, cols) = iou_m.shape();
    Ok(ScoreMatrix::from_fn(rows, cols, |i, j| {
        w.w_m * (iou_m.get(i, j) + lambda * cv_m.get(i, j)) + w.w_a * ca_m.get(i, j)
    }))
}

/// What happened inside the most recent [`Tracker::step`].
#[derive(Debug, Clone, PartialEq)]
pub struct FrameDiagnostics {
    pub frame: u32,
    /// Uniformity of this frame's detection features, when it has any.
    pub mu_det: Option<f64>,
    pub weights: AdaptiveWeights,
    /// Shape of the assignment problem that was solved.
    pub solve_shape: (usize, usize),
    /// `(detection index, track id)` pairs.
    pub matches: Vec<(usize, u64)>,
    /// Ids of tracks re-acquired through a virtual-path re-update.
    pub reupdated: Vec<u64>,
}

/// One online tracker instance. Not shareable across threads while stepping;
/// run one instance per sequence.
#[derive(Debug)]
pub struct Tracker {
    cfg: TrackerConfig,
    model: MotionModel,
    tracks: Vec<Track>,
    next_id: u64,
    last_frame: Option<u32>,
    solves: u64,
    diagnostics: Option<FrameDiagnostics>,
}

impl Tracker {
    pub fn new(cfg: TrackerConfig) -> Result<Self> {
        cfg.validate()?;
        let model = MotionModel::new(cfg.motion.clone())?;
        Ok(Self {
            cfg,
            model,
            tracks: Vec::new(),
            next_id: 1,
            last_frame: None,
            solves: 0,
            diagnostics: None,
        })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    /// Live (not removed) tracks.
    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    /// Total number of assignment problems solved so far.
    pub fn solve_count(&self) -> u64 {
        self.solves
    }

    pub fn last_diagnostics(&self) -> Option<&FrameDiagnostics> {
        self.diagnostics.as_ref()
    }

    /// Step through every frame of `frames` in order (frames without
    /// detections included) and collect the emitted boxes.
    pub fn run(&mut self, detections: &FrameMap<Detection>, frames: RangeInclusive<u32>) -> Result<TrackFrames> {
        let mut out = TrackFrames::new();
        for f in frames {
            let dets = detections.get(&f).map_or(&[][..], Vec::as_slice);
            let emitted = self.step(f, dets)?;
            if !emitted.is_empty() {
                out.insert(f, emitted);
            }
        }
        Ok(out)
    }

    /// Process one frame and return `(track id, box)` for every confirmed
    /// track matched in it, ordered by id. Reported boxes are the matched
    /// detections.
    pub fn step(&mut self, frame: u32, detections: &[Detection]) -> Result<Vec<(u64, BBox)>> {
        let steps = match self.last_frame {
            Some(last) if frame <= last => return Err(Error::Sequencing { last, got: frame }),
            Some(last) => frame - last,
            None => 1,
        };
        let with_features = check_detections(detections)?;
        self.last_frame = Some(frame);

        for t in &mut self.tracks {
            for _ in 0..steps {
                let (state, b) = self.model.predict(&t.state);
                t.state = state;
                t.predicted = b;
            }
            t.age += steps;
        }

        let (mu_det, weights) = if detections.is_empty() {
            (None, AdaptiveWeights::NEUTRAL)
        } else if with_features {
            let feats: Vec<&Feature> = detections.iter().filter_map(|d| d.feature.as_ref()).collect();
            let u = appearance::uniformity(&feats)?;
            let w = appearance::adaptive_weights(u.mu_det, self.cfg.theta_deg, self.cfg.clamp_weights)?;
            (Some(u.mu_det), w)
        } else {
            (None, AdaptiveWeights::MOTION_ONLY)
        };

        let fused = self.fused_scores(detections, weights, with_features)?;
        let solution = assignment::solve(&fused, self.cfg.gate)?;
        self.solves += 1;

        let mut matched_track = vec![false; self.tracks.len()];
        let mut matches = Vec::with_capacity(solution.matches.len());
        let mut reupdated = Vec::new();
        for &(di, ti) in &solution.matches {
            matched_track[ti] = true;
            let det = &detections[di];
            let t = &mut self.tracks[ti];
            let (last_frame, last_box) = t.last_observation();
            let gap = frame - last_frame;
            t.state = if self.cfg.use_oru && gap >= 2 {
                reupdated.push(t.id);
                self.model.oru_reupdate(&t.checkpoint, &last_box, &det.bbox, gap)?
            } else {
                self.model.update(&t.state, &det.bbox)?
            };
            t.checkpoint = t.state.clone();
            if let Some(f) = &det.feature {
                t.ema_feat = Some(match &t.ema_feat {
                    Some(prev) => appearance::ema_update(prev, f, self.cfg.alpha_ema)?,
                    None => f.clone(),
                });
            }
            t.history.push_back((frame, det.bbox));
            while t.history.len() > self.cfg.delta_t as usize + 1 {
                t.history.pop_front();
            }
            t.hits += 1;
            t.time_since_update = 0;
            t.status = match t.status {
                TrackStatus::Tentative if t.hits >= self.cfg.min_hits => TrackStatus::Confirmed,
                TrackStatus::Tentative => TrackStatus::Tentative,
                _ => TrackStatus::Confirmed,
            };
            matches.push((di, t.id));
        }

        for (t, matched) in self.tracks.iter_mut().zip(&matched_track) {
            if *matched {
                continue;
            }
            t.time_since_update += steps;
            t.status = match t.status {
                TrackStatus::Tentative => TrackStatus::Removed,
                _ if t.time_since_update > self.cfg.max_age => TrackStatus::Removed,
                _ => TrackStatus::Lost,
            };
        }
        self.tracks.retain(|t| t.status != TrackStatus::Removed);

        for &di in &solution.unmatched_rows {
            self.spawn(frame, &detections[di])?;
        }

        let mut out: Vec<(u64, BBox)> = self
            .tracks
            .iter()
            .filter(|t| t.status == TrackStatus::Confirmed && t.time_since_update == 0)
            .map(|t| (t.id, t.last_observation().1))
            .collect();
        out.sort_by_key(|(id, _)| *id);

        self.diagnostics = Some(FrameDiagnostics {
            frame,
            mu_det,
            weights,
            solve_shape: fused.shape(),
            matches,
            reupdated,
        });
        Ok(out)
    }

    fn fused_scores(&self, dets: &[Detection], w: AdaptiveWeights, with_features: bool) -> Result<ScoreMatrix> {
        let (m, n) = (dets.len(), self.tracks.len());
        let iou_m = ScoreMatrix::from_fn(m, n, |i, j| iou_unchecked(&dets[i].bbox, &self.tracks[j].predicted));
        let cv_m = ScoreMatrix::from_fn(m, n, |i, j| velocity_consistency(&self.tracks[j], &dets[i].bbox, self.cfg.delta_t));
        let mut ca_m = ScoreMatrix::zeros(m, n);
        if with_features {
            for (i, d) in dets.iter().enumerate() {
                let df = d.feature.as_ref().expect("checked: every detection has a feature");
                for (j, t) in self.tracks.iter().enumerate() {
                    if let Some(tf) = &t.ema_feat {
                        ca_m.set(i, j, appearance::cosine(df, tf)?);
                    }
                }
            }
        }
        fused_cost(&iou_m, &cv_m, &ca_m, w, self.cfg.lambda)
    }

    fn spawn(&mut self, frame: u32, det: &Detection) -> Result<()> {
        let state = self.model.init(&det.bbox)?;
        let status = if self.cfg.min_hits <= 1 {
            TrackStatus::Confirmed
        } else {
            TrackStatus::Tentative
        };
        self.tracks.push(Track {
            id: self.next_id,
            checkpoint: state.clone(),
            state,
            ema_feat: det.feature.clone(),
            history: VecDeque::from([(frame, det.bbox)]),
            hits: 1,
            age: 0,
            time_since_update: 0,
            status,
            predicted: det.bbox,
        });
        self.next_id += 1;
        Ok(())
    }
}

/// Validates boxes and the all-or-nothing feature rule. Returns whether the
/// frame carries features.
fn check_detections(dets: &[Detection]) -> Result<bool> {
    for d in dets {
        d.bbox.validate()?;
    }
    let with = dets.iter().filter(|d| d.feature.is_some()).count();
    if with != 0 && with != dets.len() {
        return Err(Error::invalid(format!(
            "{with} of {} detections carry features; a frame must be all or none",
            dets.len()
        )));
    }
    if with > 0 {
        let dim = dets[0].feature.as_ref().map(Feature::dim);
        if dets.iter().any(|d| d.feature.as_ref().map(Feature::dim) != dim) {
            return Err(Error::invalid("detection features have mixed dimensions"));
        }
    }
    Ok(with > 0)
}
