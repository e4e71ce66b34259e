//! Deterministic synthetic scenarios for exercising the tracker, the
//! proposal filter and the evaluator.
//!
//! All randomness comes from ChaCha8 (`rand_chacha::ChaCha8Rng`) seeded with
//! `seed_from_u64(seed)`. ChaCha8 is a portable, platform-independent stream
//! cipher generator, so a configuration and seed regenerate byte-identical
//! files anywhere.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::appearance::Feature;
use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::mot_io::{self, FrameMap, TrackFrames};
use crate::qgm::Proposal;
use crate::tracker::Detection;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MotionPattern {
    /// Straight line between a random start and a random end point.
    ConstantVelocity,
    /// Horizontal lanes traversed in alternating directions, so neighbours
    /// pass each other mid-sequence, with a vertical sinusoidal wobble.
    /// `amplitude = 0` gives straight constant-velocity crossings.
    SinusoidalCrossing { amplitude: f64, period: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureMode {
    /// Mutually orthogonal unit vectors (when `n_objects <= feature_dim`).
    Distinct,
    /// One shared unit vector.
    Identical,
    /// Pairwise cosine exactly `cos_floor` around a common centre.
    Clustered { cos_floor: f64 },
}

/// Object `object` (0-based) is undetected in frames `start..=end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Occlusion {
    pub object: usize,
    pub start: u32,
    pub end: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub n_objects: usize,
    pub n_frames: u32,
    /// (width, height) in pixels.
    pub arena: (f64, f64),
    /// (width, height) of every object box.
    pub object_size: (f64, f64),
    pub motion: MotionPattern,
    /// Vertical distance between crossing lanes; defaults to 0.75 of the box height.
    pub lane_spacing: Option<f64>,
    pub feature_dim: usize,
    pub feature_mode: FeatureMode,
    /// Per-component Gaussian noise added to a detection's feature before normalizing.
    pub feature_noise_std: f64,
    pub det_noise_std: f64,
    /// Mean number of spurious boxes per frame (Poisson).
    pub fp_rate: f64,
    /// Probability that a true detection is dropped.
    pub fn_rate: f64,
    pub occlusion_windows: Vec<Occlusion>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_objects: 5,
            n_frames: 100,
            arena: (1280.0, 720.0),
            object_size: (40.0, 80.0),
            motion: MotionPattern::ConstantVelocity,
            lane_spacing: None,
            feature_dim: 64,
            feature_mode: FeatureMode::Distinct,
            feature_noise_std: 0.0,
            det_noise_std: 0.0,
            fp_rate: 0.0,
            fn_rate: 0.0,
            occlusion_windows: Vec::new(),
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::config(format!("{name} must be positive, got {v}")))
    }
}

fn non_negative(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::config(format!("{name} must be non-negative, got {v}")))
    }
}

impl ScenarioConfig {
    fn lane_spacing(&self) -> f64 {
        self.lane_spacing.unwrap_or(0.75 * self.object_size.1)
    }

    pub fn validate(&self) -> Result<()> {
        let (aw, ah) = self.arena;
        let (ow, oh) = self.object_size;
        for (name, v) in [("arena width", aw), ("arena height", ah), ("object width", ow), ("object height", oh)] {
            positive(name, v)?;
        }
        if ow > aw || oh > ah {
            return Err(Error::config(format!("objects ({ow}x{oh}) do not fit the arena ({aw}x{ah})")));
        }
        if self.n_objects == 0 || self.n_frames == 0 || self.feature_dim == 0 {
            return Err(Error::config("n_objects, n_frames and feature_dim must be at least 1"));
        }
        non_negative("det_noise_std", self.det_noise_std)?;
        non_negative("feature_noise_std", self.feature_noise_std)?;
        non_negative("fp_rate", self.fp_rate)?;
        if !(0.0..=1.0).contains(&self.fn_rate) {
            return Err(Error::config(format!("fn_rate must lie in [0, 1], got {}", self.fn_rate)));
        }
        for o in &self.occlusion_windows {
            if o.object >= self.n_objects || o.start == 0 || o.start > o.end {
                return Err(Error::config(format!("invalid occlusion window {o:?}")));
            }
        }
        if let FeatureMode::Clustered { cos_floor } = self.feature_mode {
            if !(cos_floor > 0.0 && cos_floor <= 1.0) {
                return Err(Error::config(format!("cos_floor must lie in (0, 1], got {cos_floor}")));
            }
            if self.n_objects + 1 > self.feature_dim {
                return Err(Error::config("clustered features need feature_dim > n_objects"));
            }
        }
        if let MotionPattern::SinusoidalCrossing { amplitude, period } = self.motion {
            non_negative("amplitude", amplitude)?;
            positive("period", period)?;
            let spacing = self.lane_spacing();
            non_negative("lane_spacing", spacing)?;
            let span = (self.n_objects - 1) as f64 * spacing + oh + 2.0 * amplitude;
            if span > ah {
                return Err(Error::config(format!("crossing lanes need {span} px of height, arena has {ah}")));
            }
        }
        Ok(())
    }
}

/// Generated ground truth and detections.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub gt: TrackFrames,
    pub detections: FrameMap<Detection>,
    /// Clean appearance of each object (index = object id - 1).
    pub object_features: Vec<Feature>,
}

/// Paths written by [`Scenario::write`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioFiles {
    pub gt: PathBuf,
    pub detections: PathBuf,
    pub features: PathBuf,
}

impl Scenario {
    pub fn write(&self, dir: &Path) -> Result<ScenarioFiles> {
        fs::create_dir_all(dir)?;
        let files = ScenarioFiles {
            gt: dir.join("gt.txt"),
            detections: dir.join("det.txt"),
            features: dir.join("features.txt"),
        };
        fs::write(&files.gt, mot_io::format_ground_truth(&self.gt))?;
        fs::write(&files.detections, mot_io::format_detections(&self.detections))?;
        fs::write(&files.features, mot_io::format_features(&self.detections)?)?;
        Ok(files)
    }
}

fn gaussian_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

/// `count` orthonormal vectors in `dim` dimensions (Gram-Schmidt on Gaussian draws).
fn orthonormal(rng: &mut ChaCha8Rng, count: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(count);
    while basis.len() < count {
        let mut v = gaussian_vector(rng, dim);
        for b in &basis {
            let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            basis.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    basis
}

fn mix(a: f64, u: &[f64], b: f64, v: &[f64]) -> Vec<f64> {
    u.iter().zip(v).map(|(x, y)| a * x + b * y).collect()
}

fn object_features(cfg: &ScenarioConfig, rng: &mut ChaCha8Rng) -> Result<Vec<Feature>> {
    let (n, dim) = (cfg.n_objects, cfg.feature_dim);
    let raw: Vec<Vec<f64>> = match cfg.feature_mode {
        FeatureMode::Identical => vec![gaussian_vector(rng, dim); n],
        FeatureMode::Distinct => {
            let k = n.min(dim);
            let mut v = orthonormal(rng, k, dim);
            v.extend((k..n).map(|_| gaussian_vector(rng, dim)));
            v
        }
        FeatureMode::Clustered { cos_floor } => {
            let basis = orthonormal(rng, n + 1, dim);
            let (a, b) = (cos_floor.sqrt(), (1.0 - cos_floor).sqrt());
            basis[1..].iter().map(|e| mix(a, &basis[0], b, e)).collect()
        }
    };
    raw.into_iter().map(Feature::new).collect()
}

fn trajectories(cfg: &ScenarioConfig, rng: &mut ChaCha8Rng) -> Vec<Vec<BBox>> {
    let (aw, ah) = cfg.arena;
    let (ow, oh) = cfg.object_size;
    let (xmax, ymax) = (aw - ow, ah - oh);
    let n = cfg.n_objects;
    let span = (cfg.n_frames.max(2) - 1) as f64;
    (0..n)
        .map(|k| {
            let path: Box<dyn Fn(u32) -> (f64, f64)> = match cfg.motion {
                MotionPattern::ConstantVelocity => {
                    let (x0, y0) = (rng.random_range(0.0..=xmax), rng.random_range(0.0..=ymax));
                    let (x1, y1) = (rng.random_range(0.0..=xmax), rng.random_range(0.0..=ymax));
                    Box::new(move |f| {
                        let t = (f - 1) as f64 / span;
                        (x0 + (x1 - x0) * t, y0 + (y1 - y0) * t)
                    })
                }
                MotionPattern::SinusoidalCrossing { amplitude, period } => {
                    let lane = ah / 2.0 - oh / 2.0 + (k as f64 - (n - 1) as f64 / 2.0) * cfg.lane_spacing();
                    let rightward = k % 2 == 0;
                    Box::new(move |f| {
                        let t = (f - 1) as f64 / span;
                        let x = if rightward { xmax * t } else { xmax * (1.0 - t) };
                        let y = lane + amplitude * (2.0 * PI * (f - 1) as f64 / period).sin();
                        (x, y.clamp(0.0, ymax))
                    })
                }
            };
            (1..=cfg.n_frames)
                .map(|f| {
                    let (x, y) = path(f);
                    BBox::new(x, y, ow, oh)
                })
                .collect()
        })
        .collect()
}

fn clamp_to_arena(b: BBox, arena: (f64, f64)) -> BBox {
    let w = b.w.clamp(1.0, arena.0);
    let h = b.h.clamp(1.0, arena.1);
    BBox::new(b.x.clamp(0.0, arena.0 - w), b.y.clamp(0.0, arena.1 - h), w, h)
}

fn perturbed_feature(base: &Feature, std: f64, rng: &mut ChaCha8Rng) -> Result<Feature> {
    if std == 0.0 {
        return Ok(base.clone());
    }
    let noise = Normal::new(0.0, std).map_err(|e| Error::config(e.to_string()))?;
    Feature::new(base.as_slice().iter().map(|x| x + noise.sample(rng)).collect())
}

/// Generate a scenario. Identical configurations produce identical output.
pub fn generate(cfg: &ScenarioConfig) -> Result<Scenario> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let feats = object_features(cfg, &mut rng)?;
    let paths = trajectories(cfg, &mut rng);
    let box_noise = Normal::new(0.0, cfg.det_noise_std).map_err(|e| Error::config(e.to_string()))?;
    let fp_count = if cfg.fp_rate > 0.0 {
        Some(Poisson::new(cfg.fp_rate).map_err(|e| Error::config(e.to_string()))?)
    } else {
        None
    };
    let (ow, oh) = cfg.object_size;

    let mut gt = TrackFrames::new();
    let mut detections = FrameMap::new();
    for f in 1..=cfg.n_frames {
        let mut dets = Vec::new();
        for (k, path) in paths.iter().enumerate() {
            let truth = path[(f - 1) as usize];
            gt.entry(f).or_default().push((k as u64 + 1, truth));
            let occluded = cfg
                .occlusion_windows
                .iter()
                .any(|o| o.object == k && (o.start..=o.end).contains(&f));
            if occluded || (cfg.fn_rate > 0.0 && rng.random_bool(cfg.fn_rate)) {
                continue;
            }
            let bbox = if cfg.det_noise_std > 0.0 {
                let mut d = || box_noise.sample(&mut rng);
                clamp_to_arena(BBox::new(truth.x + d(), truth.y + d(), truth.w + d(), truth.h + d()), cfg.arena)
            } else {
                truth
            };
            let conf = rng.random_range(0.5..1.0);
            let feature = perturbed_feature(&feats[k], cfg.feature_noise_std, &mut rng)?;
            dets.push(Detection::new(bbox, conf).with_feature(feature));
        }
        let spurious = fp_count.as_ref().map_or(0, |p| p.sample(&mut rng) as usize);
        for _ in 0..spurious {
            let bbox = BBox::new(rng.random_range(0.0..=cfg.arena.0 - ow), rng.random_range(0.0..=cfg.arena.1 - oh), ow, oh);
            let conf = rng.random_range(0.3..0.7);
            let feature = Feature::new(gaussian_vector(&mut rng, cfg.feature_dim))?;
            dets.push(Detection::new(bbox, conf).with_feature(feature));
        }
        if !dets.is_empty() {
            detections.insert(f, dets);
        }
    }
    Ok(Scenario {
        gt,
        detections,
        object_features: feats,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProposalKind {
    /// Instance of the referred class: high specific and general scores.
    Class,
    /// Same general category, wrong attributes: passes the general threshold only.
    Distractor,
    /// Below the general threshold.
    Background,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProposalPoolConfig {
    pub seed: u64,
    pub n_frames: u32,
    pub n_class: usize,
    pub n_distractors: usize,
    pub n_background: usize,
    pub feature_dim: usize,
    /// Pairwise cosine among class features.
    pub class_cos: f64,
    /// Cosine between any distractor and any class feature.
    pub distractor_cos: f64,
    pub arena: (f64, f64),
    pub object_size: (f64, f64),
}

impl Default for ProposalPoolConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_frames: 1,
            n_class: 10,
            n_distractors: 8,
            n_background: 6,
            feature_dim: 64,
            class_cos: 0.95,
            distractor_cos: 0.4,
            arena: (1280.0, 720.0),
            object_size: (40.0, 80.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProposalPool {
    pub proposals: Vec<Proposal>,
    pub kinds: Vec<ProposalKind>,
}

impl ProposalPool {
    pub fn write(&self, path: &Path) -> Result<()> {
        Ok(fs::write(path, mot_io::format_proposals(&self.proposals)?)?)
    }
}

/// Build a proposal pool with a planted class cluster and distractors.
/// Within each frame the proposals are shuffled.
pub fn proposal_pool(cfg: &ProposalPoolConfig) -> Result<ProposalPool> {
    if !(cfg.class_cos > 0.0 && cfg.class_cos <= 1.0) || !(0.0..=cfg.class_cos.sqrt()).contains(&cfg.distractor_cos) {
        return Err(Error::config("need 0 < class_cos <= 1 and 0 <= distractor_cos <= sqrt(class_cos)"));
    }
    if cfg.n_frames == 0 || cfg.n_class == 0 {
        return Err(Error::config("n_frames and n_class must be at least 1"));
    }
    if 1 + cfg.n_class + cfg.n_distractors > cfg.feature_dim {
        return Err(Error::config("feature_dim must exceed n_class + n_distractors"));
    }
    let (ow, oh) = cfg.object_size;
    if !(ow > 0.0 && oh > 0.0 && ow <= cfg.arena.0 && oh <= cfg.arena.1) {
        return Err(Error::config("objects do not fit the arena"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let basis = orthonormal(&mut rng, 1 + cfg.n_class + cfg.n_distractors, cfg.feature_dim);
    let centre = &basis[0];
    let (a, b) = (cfg.class_cos.sqrt(), (1.0 - cfg.class_cos).sqrt());
    let class_feats: Vec<Feature> = basis[1..=cfg.n_class]
        .iter()
        .map(|e| Feature::new(mix(a, centre, b, e)))
        .collect::<Result<_>>()?;
    let c = cfg.distractor_cos / a;
    let distractor_feats: Vec<Feature> = basis[1 + cfg.n_class..]
        .iter()
        .map(|e| Feature::new(mix(c, centre, (1.0 - c * c).sqrt(), e)))
        .collect::<Result<_>>()?;

    let mut proposals = Vec::new();
    let mut kinds = Vec::new();
    for frame in 1..=cfg.n_frames {
        let mut entries: Vec<(ProposalKind, f64, f64, Feature)> = Vec::new();
        for f in &class_feats {
            entries.push((ProposalKind::Class, rng.random_range(0.6..1.0), rng.random_range(0.4..1.0), f.clone()));
        }
        for f in &distractor_feats {
            entries.push((ProposalKind::Distractor, rng.random_range(0.0..0.3), rng.random_range(0.4..0.9), f.clone()));
        }
        for _ in 0..cfg.n_background {
            let f = Feature::new(gaussian_vector(&mut rng, cfg.feature_dim))?;
            entries.push((ProposalKind::Background, rng.random_range(0.0..0.2), rng.random_range(0.0..0.25), f));
        }
        entries.shuffle(&mut rng);
        for (kind, s_spec, s_gen, feature) in entries {
            let bbox = BBox::new(rng.random_range(0.0..=cfg.arena.0 - ow), rng.random_range(0.0..=cfg.arena.1 - oh), ow, oh);
            proposals.push(Proposal {
                frame,
                bbox,
                s_spec,
                s_gen,
                feature,
            });
            kinds.push(kind);
        }
    }
    Ok(ProposalPool { proposals, kinds })
}
