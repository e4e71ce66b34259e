//! Tracking evaluation: CLEAR (MOTA), identity (IDF1) and HOTA.
//!
//! The protocols follow the public reference evaluator (TrackEval) step for
//! step, including its epsilon comparisons, so that numbers are comparable
//! with published MOTChallenge results. Similarity between boxes is IoU.
//!
//! Per-sequence results can be combined either by pooling (counts summed,
//! HOTA association accuracy weighted by true positives) or by averaging the
//! per-sequence scores.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::Serialize;

use crate::assignment::{solve, ScoreMatrix};
use crate::error::{Error, Result};
use crate::geometry::iou;
use crate::mot_io::TrackFrames;

pub const DEFAULT_IOU_THRESH: f64 = 0.5;

const EPS: f64 = f64::EPSILON;

/// Localization thresholds 0.05, 0.10, ..., 0.95.
pub fn alpha_grid() -> Vec<f64> {
    (0..19).map(|i| 0.05 + i as f64 * 0.05).collect()
}

struct FrameData {
    gt_ids: Vec<usize>,
    tr_ids: Vec<usize>,
    /// `sim[g][t]` is the IoU of gt box `g` and tracker box `t`.
    sim: Vec<Vec<f64>>,
}

/// A sequence with ids remapped to dense indices.
struct SequenceData {
    frames: Vec<FrameData>,
    num_gt_ids: usize,
    num_tr_ids: usize,
    num_gt_dets: usize,
    num_tr_dets: usize,
}

fn dense_ids(frames: &TrackFrames, what: &str) -> Result<HashMap<u64, usize>> {
    let mut ids = BTreeSet::new();
    for (f, list) in frames {
        let mut seen = BTreeSet::new();
        for (id, b) in list {
            if !seen.insert(*id) {
                return Err(Error::invalid(format!("{what} frame {f} contains id {id} more than once")));
            }
            b.validate()?;
            ids.insert(*id);
        }
    }
    Ok(ids.into_iter().enumerate().map(|(i, id)| (id, i)).collect())
}

impl SequenceData {
    fn new(gt: &TrackFrames, pred: &TrackFrames) -> Result<Self> {
        let gt_map = dense_ids(gt, "ground truth")?;
        let tr_map = dense_ids(pred, "prediction")?;
        let num_gt_dets: usize = gt.values().map(Vec::len).sum();
        if num_gt_dets == 0 {
            return Err(Error::UndefinedMetric("ground truth is empty".into()));
        }
        let keys: BTreeSet<u32> = gt.keys().chain(pred.keys()).copied().collect();
        let empty = Vec::new();
        let mut frames = Vec::with_capacity(keys.len());
        for f in keys {
            let g = gt.get(&f).unwrap_or(&empty);
            let t = pred.get(&f).unwrap_or(&empty);
            let sim = g
                .iter()
                .map(|(_, gb)| t.iter().map(|(_, tb)| iou(gb, tb)).collect::<Result<Vec<f64>>>())
                .collect::<Result<Vec<_>>>()?;
            frames.push(FrameData {
                gt_ids: g.iter().map(|(id, _)| gt_map[id]).collect(),
                tr_ids: t.iter().map(|(id, _)| tr_map[id]).collect(),
                sim,
            });
        }
        Ok(Self {
            frames,
            num_gt_ids: gt_map.len(),
            num_tr_ids: tr_map.len(),
            num_gt_dets,
            num_tr_dets: pred.values().map(Vec::len).sum(),
        })
    }
}

fn check_thresh(thresh: f64) -> Result<()> {
    if thresh > 0.0 && thresh < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("iou threshold must lie in (0, 1), got {thresh}")))
    }
}

/// Maximum-total matching over strictly positive scores.
fn match_positive(scores: &[Vec<f64>]) -> Result<Vec<(usize, usize)>> {
    let rows = scores.len();
    let cols = scores.first().map_or(0, Vec::len);
    let m = ScoreMatrix::from_fn(rows, cols, |r, c| scores[r][c]);
    Ok(solve(&m, f64::MIN_POSITIVE)?.matches)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClearResult {
    pub mota: f64,
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub idsw: u64,
}

impl ClearResult {
    fn from_counts(tp: u64, fp: u64, fn_: u64, idsw: u64) -> Self {
        let mota = (tp as f64 - fp as f64 - idsw as f64) / (tp + fn_).max(1) as f64;
        Self { mota, tp, fp, fn_, idsw }
    }
}

fn clear_seq(seq: &SequenceData, thresh: f64) -> Result<ClearResult> {
    let (mut tp, mut fp, mut fn_, mut idsw) = (0u64, 0u64, 0u64, 0u64);
    let mut prev_id: Vec<Option<usize>> = vec![None; seq.num_gt_ids];
    let mut prev_step: Vec<Option<usize>> = vec![None; seq.num_gt_ids];
    for fr in &seq.frames {
        if fr.gt_ids.is_empty() {
            fp += fr.tr_ids.len() as u64;
            continue;
        }
        if fr.tr_ids.is_empty() {
            fn_ += fr.gt_ids.len() as u64;
            continue;
        }
        let scores: Vec<Vec<f64>> = fr
            .gt_ids
            .iter()
            .zip(&fr.sim)
            .map(|(&g, row)| {
                fr.tr_ids
                    .iter()
                    .zip(row)
                    .map(|(&t, &s)| {
                        if s < thresh - EPS {
                            0.0
                        } else {
                            let carried = if prev_step[g] == Some(t) { 1000.0 } else { 0.0 };
                            carried + s
                        }
                    })
                    .collect()
            })
            .collect();
        let matches: Vec<(usize, usize)> = match_positive(&scores)?
            .into_iter()
            .filter(|&(r, c)| scores[r][c] > EPS)
            .map(|(r, c)| (fr.gt_ids[r], fr.tr_ids[c]))
            .collect();
        for &(g, t) in &matches {
            if prev_id[g].is_some_and(|p| p != t) {
                idsw += 1;
            }
        }
        prev_step.iter_mut().for_each(|p| *p = None);
        for &(g, t) in &matches {
            prev_id[g] = Some(t);
            prev_step[g] = Some(t);
        }
        tp += matches.len() as u64;
        fn_ += (fr.gt_ids.len() - matches.len()) as u64;
        fp += (fr.tr_ids.len() - matches.len()) as u64;
    }
    Ok(ClearResult::from_counts(tp, fp, fn_, idsw))
}

/// CLEAR MOT accuracy with match carry-over between consecutive frames.
pub fn clear_mota(gt: &TrackFrames, pred: &TrackFrames, iou_thresh: f64) -> Result<ClearResult> {
    check_thresh(iou_thresh)?;
    clear_seq(&SequenceData::new(gt, pred)?, iou_thresh)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdentityResult {
    pub idf1: f64,
    pub idtp: u64,
    pub idfp: u64,
    pub idfn: u64,
}

impl IdentityResult {
    fn from_counts(idtp: u64, idfp: u64, idfn: u64) -> Self {
        let denom = (idtp as f64 + 0.5 * idfp as f64 + 0.5 * idfn as f64).max(1.0);
        Self {
            idf1: idtp as f64 / denom,
            idtp,
            idfp,
            idfn,
        }
    }
}

/// Frames in which each (gt id, tracker id) pair overlaps at `iou >= thresh`.
fn co_location_counts(seq: &SequenceData, thresh: f64) -> Vec<Vec<f64>> {
    let mut counts = vec![vec![0.0; seq.num_tr_ids]; seq.num_gt_ids];
    for fr in &seq.frames {
        for (&g, row) in fr.gt_ids.iter().zip(&fr.sim) {
            for (&t, &s) in fr.tr_ids.iter().zip(row) {
                if s >= thresh {
                    counts[g][t] += 1.0;
                }
            }
        }
    }
    counts
}

fn identity_seq(seq: &SequenceData, thresh: f64) -> Result<IdentityResult> {
    let counts = co_location_counts(seq, thresh);
    let idtp: u64 = match_positive(&counts)?
        .into_iter()
        .map(|(g, t)| counts[g][t] as u64)
        .sum();
    Ok(IdentityResult::from_counts(
        idtp,
        seq.num_tr_dets as u64 - idtp,
        seq.num_gt_dets as u64 - idtp,
    ))
}

/// Identity F1 under the best global one-to-one mapping of trajectories.
pub fn idf1(gt: &TrackFrames, pred: &TrackFrames, iou_thresh: f64) -> Result<IdentityResult> {
    check_thresh(iou_thresh)?;
    identity_seq(&SequenceData::new(gt, pred)?, iou_thresh)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AlphaRow {
    pub alpha: f64,
    pub hota: f64,
    pub deta: f64,
    pub assa: f64,
    pub tp: u64,
    pub fn_: u64,
    pub fp: u64,
}

impl AlphaRow {
    fn new(alpha: f64, tp: u64, fn_: u64, fp: u64, assa: f64) -> Self {
        let deta = tp as f64 / (tp + fn_ + fp).max(1) as f64;
        Self {
            alpha,
            hota: (deta * assa).sqrt(),
            deta,
            assa,
            tp,
            fn_,
            fp,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HotaResult {
    pub hota: f64,
    pub deta: f64,
    pub assa: f64,
    pub per_alpha: Vec<AlphaRow>,
}

impl HotaResult {
    fn from_rows(per_alpha: Vec<AlphaRow>) -> Self {
        let n = per_alpha.len() as f64;
        let mean = |f: fn(&AlphaRow) -> f64| per_alpha.iter().map(f).sum::<f64>() / n;
        Self {
            hota: mean(|r| r.hota),
            deta: mean(|r| r.deta),
            assa: mean(|r| r.assa),
            per_alpha,
        }
    }
}

fn hota_seq(seq: &SequenceData) -> Result<HotaResult> {
    let alphas = alpha_grid();
    if seq.num_tr_dets == 0 {
        let rows = alphas.iter().map(|&a| AlphaRow::new(a, 0, seq.num_gt_dets as u64, 0, 0.0)).collect();
        return Ok(HotaResult::from_rows(rows));
    }

    let (ng, nt) = (seq.num_gt_ids, seq.num_tr_ids);
    let mut potential = vec![vec![0.0; nt]; ng];
    let mut gt_count = vec![0.0; ng];
    let mut tr_count = vec![0.0; nt];
    for fr in &seq.frames {
        let col_sums: Vec<f64> = (0..fr.tr_ids.len()).map(|c| fr.sim.iter().map(|r| r[c]).sum()).collect();
        for ((&g, row), row_sum) in fr.gt_ids.iter().zip(&fr.sim).zip(fr.sim.iter().map(|r| r.iter().sum::<f64>())) {
            for ((&t, &s), col_sum) in fr.tr_ids.iter().zip(row).zip(&col_sums) {
                let denom = row_sum + col_sum - s;
                if denom > EPS {
                    potential[g][t] += s / denom;
                }
            }
        }
        fr.gt_ids.iter().for_each(|&g| gt_count[g] += 1.0);
        fr.tr_ids.iter().for_each(|&t| tr_count[t] += 1.0);
    }
    let alignment: Vec<Vec<f64>> = (0..ng)
        .map(|g| (0..nt).map(|t| potential[g][t] / (gt_count[g] + tr_count[t] - potential[g][t])).collect())
        .collect();

    let mut tp = vec![0u64; alphas.len()];
    let mut fn_ = vec![0u64; alphas.len()];
    let mut fp = vec![0u64; alphas.len()];
    let mut pair_counts = vec![vec![vec![0.0; nt]; ng]; alphas.len()];
    for fr in &seq.frames {
        let (n_gt, n_tr) = (fr.gt_ids.len() as u64, fr.tr_ids.len() as u64);
        if n_gt == 0 || n_tr == 0 {
            fp.iter_mut().for_each(|v| *v += n_tr);
            fn_.iter_mut().for_each(|v| *v += n_gt);
            continue;
        }
        let scores: Vec<Vec<f64>> = fr
            .gt_ids
            .iter()
            .zip(&fr.sim)
            .map(|(&g, row)| fr.tr_ids.iter().zip(row).map(|(&t, &s)| alignment[g][t] * s).collect())
            .collect();
        let matches = match_positive(&scores)?;
        for (a, &alpha) in alphas.iter().enumerate() {
            let mut hits = 0u64;
            for &(r, c) in &matches {
                if fr.sim[r][c] >= alpha - EPS {
                    hits += 1;
                    pair_counts[a][fr.gt_ids[r]][fr.tr_ids[c]] += 1.0;
                }
            }
            tp[a] += hits;
            fn_[a] += n_gt - hits;
            fp[a] += n_tr - hits;
        }
    }

    let rows = alphas
        .iter()
        .enumerate()
        .map(|(a, &alpha)| {
            let mut weighted = 0.0;
            for g in 0..ng {
                for t in 0..nt {
                    let mc = pair_counts[a][g][t];
                    weighted += mc * (mc / (gt_count[g] + tr_count[t] - mc).max(1.0));
                }
            }
            AlphaRow::new(alpha, tp[a], fn_[a], fp[a], weighted / (tp[a].max(1) as f64))
        })
        .collect();
    Ok(HotaResult::from_rows(rows))
}

/// HOTA with its detection / association decomposition over the alpha grid.
pub fn hota(gt: &TrackFrames, pred: &TrackFrames) -> Result<HotaResult> {
    hota_seq(&SequenceData::new(gt, pred)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub hota: HotaResult,
    pub clear: ClearResult,
    pub identity: IdentityResult,
}

/// Evaluate one sequence with all three metric families.
pub fn evaluate(gt: &TrackFrames, pred: &TrackFrames, iou_thresh: f64) -> Result<MetricsReport> {
    check_thresh(iou_thresh)?;
    let seq = SequenceData::new(gt, pred)?;
    Ok(MetricsReport {
        hota: hota_seq(&seq)?,
        clear: clear_seq(&seq, iou_thresh)?,
        identity: identity_seq(&seq, iou_thresh)?,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Aggregation {
    /// Counts summed over sequences; association accuracy weighted by TP.
    #[default]
    Pooled,
    /// Arithmetic mean of per-sequence scores; counts still summed.
    SequenceMean,
}

/// Combine per-sequence reports.
pub fn aggregate(reports: &[MetricsReport], mode: Aggregation) -> Result<MetricsReport> {
    let first = reports
        .first()
        .ok_or_else(|| Error::UndefinedMetric("no sequences to aggregate".into()))?;
    let sum = |f: &dyn Fn(&MetricsReport) -> u64| reports.iter().map(f).sum::<u64>();
    let (tp, fp, fn_, idsw) = (
        sum(&|r| r.clear.tp),
        sum(&|r| r.clear.fp),
        sum(&|r| r.clear.fn_),
        sum(&|r| r.clear.idsw),
    );
    let (idtp, idfp, idfn) = (
        sum(&|r| r.identity.idtp),
        sum(&|r| r.identity.idfp),
        sum(&|r| r.identity.idfn),
    );
    let n_alpha = first.hota.per_alpha.len();
    let rows: Vec<AlphaRow> = (0..n_alpha)
        .map(|a| {
            let row = |r: &MetricsReport| r.hota.per_alpha[a];
            let tp = reports.iter().map(|r| row(r).tp).sum::<u64>();
            let fn_ = reports.iter().map(|r| row(r).fn_).sum::<u64>();
            let fp = reports.iter().map(|r| row(r).fp).sum::<u64>();
            let weighted = reports.iter().map(|r| row(r).assa * row(r).tp as f64).sum::<f64>();
            AlphaRow::new(row(first).alpha, tp, fn_, fp, weighted / (tp as f64).max(EPS))
        })
        .collect();
    let mut out = MetricsReport {
        hota: HotaResult::from_rows(rows),
        clear: ClearResult::from_counts(tp, fp, fn_, idsw),
        identity: IdentityResult::from_counts(idtp, idfp, idfn),
    };
    if mode == Aggregation::SequenceMean {
        let n = reports.len() as f64;
        let mean = |f: &dyn Fn(&MetricsReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        for (a, row) in out.hota.per_alpha.iter_mut().enumerate() {
            row.deta = mean(&|r| r.hota.per_alpha[a].deta);
            row.assa = mean(&|r| r.hota.per_alpha[a].assa);
            row.hota = mean(&|r| r.hota.per_alpha[a].hota);
        }
        out.hota.hota = mean(&|r| r.hota.hota);
        out.hota.deta = mean(&|r| r.hota.deta);
        out.hota.assa = mean(&|r| r.hota.assa);
        out.clear.mota = mean(&|r| r.clear.mota);
        out.identity.idf1 = mean(&|r| r.identity.idf1);
    }
    Ok(out)
}

/// Flat summary with the published field names.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    #[serde(rename = "HOTA")]
    pub hota: f64,
    #[serde(rename = "DetA")]
    pub deta: f64,
    #[serde(rename = "AssA")]
    pub assa: f64,
    #[serde(rename = "MOTA")]
    pub mota: f64,
    #[serde(rename = "IDF1")]
    pub idf1: f64,
    #[serde(rename = "TP")]
    pub tp: u64,
    #[serde(rename = "FP")]
    pub fp: u64,
    #[serde(rename = "FN")]
    pub fn_: u64,
    #[serde(rename = "IDSW")]
    pub idsw: u64,
}

impl MetricsReport {
    pub fn summary(&self) -> Summary {
        Summary {
            hota: self.hota.hota,
            deta: self.hota.deta,
            assa: self.hota.assa,
            mota: self.clear.mota,
            idf1: self.identity.idf1,
            tp: self.clear.tp,
            fp: self.clear.fp,
            fn_: self.clear.fn_,
            idsw: self.clear.idsw,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.summary()).expect("summary serializes")
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = self.summary();
        writeln!(f, "{:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>6}", "HOTA", "DetA", "AssA", "MOTA", "IDF1", "TP", "FP", "FN", "IDSW")?;
        writeln!(
            f,
            "{:>8.3} {:>8.3} {:>8.3} {:>8.3} {:>8.3} {:>8} {:>8} {:>8} {:>6}",
            100.0 * s.hota,
            100.0 * s.deta,
            100.0 * s.assa,
            100.0 * s.mota,
            100.0 * s.idf1,
            s.tp,
            s.fp,
            s.fn_,
            s.idsw
        )
    }
}
