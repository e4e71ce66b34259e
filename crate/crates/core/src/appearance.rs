//! Appearance features and the adaptive motion/appearance weighting.
//!
//! When every detection in a frame looks alike, appearance cannot tell
//! objects apart and the association should lean on motion. The uniformity
//! statistic `mu_det` (mean cosine of each detection feature to the frame's
//! mean feature) drives the appearance weight
//! `w_a = (1 - mu_det) / (1 - cos theta)`, and the motion weight takes the
//! remainder, `w_m = 2 - w_a`.

use crate::assignment::ScoreMatrix;
use crate::error::{Error, Result};

/// Operating angle for the appearance weight, in degrees.
pub const DEFAULT_THETA_DEG: f64 = 67.5;
pub const DEFAULT_ALPHA_EMA: f64 = 0.95;

/// `mu_det` values this close to 1 are treated as exactly 1 (perfectly
/// uniform); the gap is accumulated rounding from averaging.
const UNIFORMITY_SNAP: f64 = 1e-12;

/// Unit-norm appearance embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct Feature(Vec<f64>);

impl Feature {
    /// Normalizes `values` to unit length. Rejects empty, non-finite and
    /// zero-norm input.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("empty feature vector"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("feature has a non-finite entry"));
        }
        let norm = dot(&values, &values).sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::invalid("feature has zero norm"));
        }
        Ok(Self(values.into_iter().map(|v| v / norm).collect()))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cosine of the angle between two raw vectors.
///
/// Written as `a.b / sqrt(|a|^2 |b|^2)` so that identical inputs give
/// exactly 1.
pub fn cosine_raw(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!("feature dimensions differ: {} vs {}", a.len(), b.len())));
    }
    let denom = (dot(a, a) * dot(b, b)).sqrt();
    if denom == 0.0 || !denom.is_finite() {
        return Err(Error::invalid("cosine of a zero-norm vector"));
    }
    Ok((dot(a, b) / denom).clamp(-1.0, 1.0))
}

pub fn cosine(f: &Feature, g: &Feature) -> Result<f64> {
    cosine_raw(&f.0, &g.0)
}

/// Detection x track cosine similarity matrix.
pub fn appearance_matrix(det_feats: &[&Feature], track_feats: &[&Feature]) -> Result<ScoreMatrix> {
    let mut m = ScoreMatrix::zeros(det_feats.len(), track_feats.len());
    for (i, d) in det_feats.iter().enumerate() {
        for (j, t) in track_feats.iter().enumerate() {
            m.set(i, j, cosine(d, t)?);
        }
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq)]
pub struct UniformityStats {
    /// Arithmetic mean of the detection features.
    pub mu: Vec<f64>,
    /// Mean cosine of each feature with `mu`, in `[-1, 1]`.
    pub mu_det: f64,
}

pub fn uniformity(det_feats: &[&Feature]) -> Result<UniformityStats> {
    let first = det_feats
        .first()
        .ok_or_else(|| Error::invalid("uniformity of an empty detection set"))?;
    let dim = first.dim();
    if det_feats.iter().any(|f| f.dim() != dim) {
        return Err(Error::invalid("detection features have mixed dimensions"));
    }
    let m = det_feats.len() as f64;
    let mut mu = vec![0.0; dim];
    for f in det_feats {
        for (acc, v) in mu.iter_mut().zip(f.as_slice()) {
            *acc += v;
        }
    }
    mu.iter_mut().for_each(|v| *v /= m);
    if dot(&mu, &mu) == 0.0 {
        return Err(Error::invalid("mean detection feature has zero norm"));
    }
    let mut total = 0.0;
    for f in det_feats {
        total += cosine_raw(f.as_slice(), &mu)?;
    }
    let mut mu_det = (total / m).clamp(-1.0, 1.0);
    if 1.0 - mu_det <= UNIFORMITY_SNAP {
        mu_det = 1.0;
    }
    Ok(UniformityStats { mu, mu_det })
}

/// Appearance and motion weights; `w_a + w_m == 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveWeights {
    pub w_a: f64,
    pub w_m: f64,
}

impl AdaptiveWeights {
    /// Equal weighting, used when a frame has no detections.
    pub const NEUTRAL: Self = Self { w_a: 1.0, w_m: 1.0 };
    /// Motion only.
    pub const MOTION_ONLY: Self = Self { w_a: 0.0, w_m: 2.0 };
}

pub fn validate_theta(theta_deg: f64) -> Result<()> {
    if !(theta_deg > 0.0 && theta_deg < 90.0) {
        return Err(Error::config(format!("theta must lie in (0, 90) degrees, got {theta_deg}")));
    }
    Ok(())
}

/// Appearance weight from the uniformity statistic. With `clamp`, `w_a` is
/// limited to `[0, 1]` so motion never weighs less than appearance.
pub fn adaptive_weights(mu_det: f64, theta_deg: f64, clamp: bool) -> Result<AdaptiveWeights> {
    validate_theta(theta_deg)?;
    if !(-1.0..=1.0).contains(&mu_det) {
        return Err(Error::invalid(format!("mu_det must lie in [-1, 1], got {mu_det}")));
    }
    let raw = (1.0 - mu_det) / (1.0 - theta_deg.to_radians().cos());
    let w_a = if clamp { raw.clamp(0.0, 1.0) } else { raw };
    Ok(AdaptiveWeights { w_a, w_m: 2.0 - w_a })
}

/// Exponential moving average of a track's feature, renormalized.
pub fn ema_update(track_feat: &Feature, det_feat: &Feature, alpha_ema: f64) -> Result<Feature> {
    if !(0.0..=1.0).contains(&alpha_ema) {
        return Err(Error::invalid(format!("alpha_ema must lie in [0, 1], got {alpha_ema}")));
    }
    if track_feat.dim() != det_feat.dim() {
        return Err(Error::invalid("feature dimensions differ"));
    }
    if alpha_ema == 1.0 {
        return Ok(track_feat.clone());
    }
    if alpha_ema == 0.0 {
        return Ok(det_feat.clone());
    }
    let blended = track_feat
        .as_slice()
        .iter()
        .zip(det_feat.as_slice())
        .map(|(t, d)| alpha_ema * t + (1.0 - alpha_ema) * d)
        .collect();
    Feature::new(blended)
}
