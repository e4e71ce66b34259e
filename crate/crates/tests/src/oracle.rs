//! Exhaustive reference evaluations for small instances.

use std::collections::{BTreeMap, BTreeSet};

use masort::geometry::iou;
use masort::mot_io::TrackFrames;
use masort::BBox;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn ids(frames: &TrackFrames) -> Vec<u64> {
    frames
        .values()
        .flatten()
        .map(|(id, _)| *id)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

fn frame_keys(gt: &TrackFrames, pred: &TrackFrames) -> BTreeSet<u32> {
    gt.keys().chain(pred.keys()).copied().collect()
}

fn boxes(frames: &TrackFrames, f: u32) -> &[(u64, BBox)] {
    frames.get(&f).map_or(&[], Vec::as_slice)
}

/// All partial injections from `0..n` into `0..m`.
fn injections(n: usize, m: usize) -> Vec<Vec<Option<usize>>> {
    fn rec(i: usize, n: usize, m: usize, used: &mut Vec<bool>, cur: &mut Vec<Option<usize>>, out: &mut Vec<Vec<Option<usize>>>) {
        if i == n {
            out.push(cur.clone());
            return;
        }
        cur.push(None);
        rec(i + 1, n, m, used, cur, out);
        cur.pop();
        for j in 0..m {
            if !used[j] {
                used[j] = true;
                cur.push(Some(j));
                rec(i + 1, n, m, used, cur, out);
                cur.pop();
                used[j] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(0, n, m, &mut vec![false; m], &mut Vec::new(), &mut out);
    out
}

/// Best identity mapping found by trying every gt-to-tracker injection.
pub fn idf1(gt: &TrackFrames, pred: &TrackFrames, thresh: f64) -> (u64, f64) {
    let (gid, tid) = (ids(gt), ids(pred));
    let frames = frame_keys(gt, pred);
    let co_located = |g: u64, t: u64| -> u64 {
        frames
            .iter()
            .filter(|&&f| {
                let gb = boxes(gt, f).iter().find(|(id, _)| *id == g);
                let tb = boxes(pred, f).iter().find(|(id, _)| *id == t);
                matches!((gb, tb), (Some((_, a)), Some((_, b))) if iou(a, b).unwrap() >= thresh)
            })
            .count() as u64
    };
    let best = injections(gid.len(), tid.len())
        .into_iter()
        .map(|m| {
            m.iter()
                .enumerate()
                .filter_map(|(g, t)| t.map(|t| co_located(gid[g], tid[t])))
                .sum::<u64>()
        })
        .max()
        .unwrap_or(0);
    let n_gt = gt.values().map(Vec::len).sum::<usize>() as f64;
    let n_tr = pred.values().map(Vec::len).sum::<usize>() as f64;
    let idtp = best as f64;
    (best, 2.0 * idtp / (2.0 * idtp + (n_tr - idtp) + (n_gt - idtp)))
}

/// Association accuracy per alpha: every frame's matching is the injection
/// maximizing the alignment-weighted IoU, and AssA is the mean over true
/// positives of TPA / (TPA + FNA + FPA).
pub fn assa(gt: &TrackFrames, pred: &TrackFrames, alphas: &[f64]) -> Vec<f64> {
    let frames = frame_keys(gt, pred);
    let mut gt_count: BTreeMap<u64, f64> = BTreeMap::new();
    let mut tr_count: BTreeMap<u64, f64> = BTreeMap::new();
    let mut soft: BTreeMap<(u64, u64), f64> = BTreeMap::new();
    for &f in &frames {
        let (g, t) = (boxes(gt, f), boxes(pred, f));
        let sim: Vec<Vec<f64>> = g.iter().map(|(_, a)| t.iter().map(|(_, b)| iou(a, b).unwrap()).collect()).collect();
        for (i, (gi, _)) in g.iter().enumerate() {
            let row: f64 = sim[i].iter().sum();
            for (j, (tj, _)) in t.iter().enumerate() {
                let col: f64 = sim.iter().map(|r| r[j]).sum();
                let denom = row + col - sim[i][j];
                if denom > f64::EPSILON {
                    *soft.entry((*gi, *tj)).or_default() += sim[i][j] / denom;
                }
            }
        }
        g.iter().for_each(|(id, _)| *gt_count.entry(*id).or_default() += 1.0);
        t.iter().for_each(|(id, _)| *tr_count.entry(*id).or_default() += 1.0);
    }
    let align = |g: u64, t: u64| {
        let p = soft.get(&(g, t)).copied().unwrap_or(0.0);
        p / (gt_count[&g] + tr_count[&t] - p)
    };

    // matched pairs per frame, with their IoU
    let mut matched: Vec<Vec<(u64, u64, f64)>> = Vec::new();
    for &f in &frames {
        let (g, t) = (boxes(gt, f), boxes(pred, f));
        let best = injections(g.len(), t.len())
            .into_iter()
            .map(|m| {
                let pairs: Vec<(u64, u64, f64)> = m
                    .iter()
                    .enumerate()
                    .filter_map(|(i, j)| j.map(|j| (g[i].0, t[j].0, iou(&g[i].1, &t[j].1).unwrap())))
                    .filter(|p| p.2 > 0.0)
                    .collect();
                let score: f64 = pairs.iter().map(|&(a, b, s)| align(a, b) * s).sum();
                (score, pairs)
            })
            .fold((f64::NEG_INFINITY, Vec::new()), |acc, x| if x.0 > acc.0 { x } else { acc });
        matched.push(best.1);
    }

    alphas
        .iter()
        .map(|&alpha| {
            let tps: Vec<(u64, u64)> = matched
                .iter()
                .flatten()
                .filter(|p| p.2 >= alpha - f64::EPSILON)
                .map(|p| (p.0, p.1))
                .collect();
            if tps.is_empty() {
                return 0.0;
            }
            let total: f64 = tps
                .iter()
                .map(|&(g, t)| {
                    let tpa = tps.iter().filter(|&&p| p == (g, t)).count() as f64;
                    let fna = gt_count[&g] - tpa;
                    let fpa = tr_count[&t] - tpa;
                    tpa / (tpa + fna + fpa)
                })
                .sum();
            total / tps.len() as f64
        })
        .collect()
}

/// A small random instance: up to 3 objects over up to 12 frames, tracked
/// with jitter, dropped boxes, spurious boxes and occasional id changes.
pub fn random_instance(seed: u64) -> (TrackFrames, TrackFrames) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_obj = rng.random_range(1..=3u64);
    let n_frames = rng.random_range(2..=12u32);
    let mut gt = TrackFrames::new();
    let mut pred = TrackFrames::new();
    let objects: Vec<(f64, f64, f64, f64)> = (0..n_obj)
        .map(|_| {
            (
                rng.random_range(0.0..80.0),
                rng.random_range(0.0..80.0),
                rng.random_range(-4.0..4.0),
                rng.random_range(-4.0..4.0),
            )
        })
        .collect();
    let mut label: Vec<u64> = (1..=n_obj).collect();
    for f in 1..=n_frames {
        for (k, &(x, y, vx, vy)) in objects.iter().enumerate() {
            if rng.random_bool(0.1) {
                continue;
            }
            let b = BBox::new(x + vx * f as f64, y + vy * f as f64, 20.0, 24.0);
            gt.entry(f).or_default().push((k as u64 + 1, b));
            if rng.random_bool(0.15) {
                continue;
            }
            if rng.random_bool(0.1) {
                label[k] = rng.random_range(1..=4);
            }
            let taken = pred.get(&f).is_some_and(|v| v.iter().any(|(id, _)| *id == label[k]));
            if !taken {
                let jitter = rng.random_range(0.0..9.0);
                let b = b.translate(rng.random_range(-jitter..=jitter), rng.random_range(-jitter..=jitter));
                pred.entry(f).or_default().push((label[k], b));
            }
        }
        if rng.random_bool(0.15) {
            let id = rng.random_range(1..=4);
            let taken = pred.get(&f).is_some_and(|v| v.iter().any(|(i, _)| *i == id));
            if !taken {
                let b = BBox::new(rng.random_range(0.0..100.0), rng.random_range(0.0..100.0), 20.0, 24.0);
                pred.entry(f).or_default().push((id, b));
            }
        }
    }
    if gt.is_empty() {
        gt.insert(1, vec![(1, BBox::new(0.0, 0.0, 20.0, 24.0))]);
    }
    (gt, pred)
}
