//! Acceptance suite: one line per criterion, run in order.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use masort::appearance::{adaptive_weights, AdaptiveWeights};
use masort::assignment::{solve, ScoreMatrix};
use masort::metrics::{alpha_grid, evaluate, hota, idf1, DEFAULT_IOU_THRESH};
use masort::motion::MotionModel;
use masort::mot_io::TrackFrames;
use masort::qgm::{filter_proposals, select_candidates, select_queries, FilterConfig};
use masort::synth::{self, FeatureMode, MotionPattern, Occlusion, ProposalKind, ProposalPoolConfig, ScenarioConfig};
use masort::tracker::{Tracker, TrackerConfig};
use masort_tests::{golden, masort_bin, oracle};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(budget_s: u64, started: Instant) -> Result<(), String> {
    let spent = started.elapsed();
    ensure(spent <= Duration::from_secs(budget_s), format!("took {spent:?}, budget {budget_s}s"))
}

fn weights_criterion() -> Outcome {
    let t = Instant::now();
    let w = |mu: f64| adaptive_weights(mu, 67.5, true).map_err(|e| e.to_string());
    ensure(w(1.0)? == AdaptiveWeights::MOTION_ONLY, format!("w(1.0) = {:?}", w(1.0)?))?;
    let at_cos = w(67.5f64.to_radians().cos())?;
    ensure((at_cos.w_a - 1.0).abs() < 1e-12 && (at_cos.w_m - 1.0).abs() < 1e-12, format!("w(cos 67.5) = {at_cos:?}"))?;
    for i in 0..1000 {
        let r = w(i as f64 / 999.0)?;
        ensure((r.w_a + r.w_m - 2.0).abs() < 1e-12, format!("sum at grid point {i} is {}", r.w_a + r.w_m))?;
    }
    let r = w(0.7)?;
    ensure(
        (r.w_a - 0.485967).abs() <= 1e-6 && (r.w_m - 1.514033).abs() <= 1e-6,
        format!("w(0.7) = ({:.9}, {:.9}), expected (0.485967, 1.514033) to 1e-6", r.w_a, r.w_m),
    )?;
    within(1, t)?;
    Ok("anchors and 1000-point sum check".into())
}

fn brute_force_total(m: &ScoreMatrix, gate: f64) -> f64 {
    fn go(m: &ScoreMatrix, gate: f64, row: usize, used: &mut [bool]) -> f64 {
        if row == m.rows() {
            return 0.0;
        }
        let mut best = go(m, gate, row + 1, used);
        for c in 0..m.cols() {
            if !used[c] && m.get(row, c) >= gate {
                used[c] = true;
                best = best.max(m.get(row, c) + go(m, gate, row + 1, used));
                used[c] = false;
            }
        }
        best
    }
    go(m, gate, 0, &mut vec![false; m.cols()])
}

fn assignment_criterion() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for case in 0..500 {
        let (rows, cols) = (rng.random_range(0..=7), rng.random_range(0..=7));
        // sixteenths keep every partial sum exact
        let m = ScoreMatrix::from_fn(rows, cols, |_, _| rng.random_range(-16..=32) as f64 / 16.0);
        let gate = rng.random_range(-16..=24) as f64 / 16.0;
        let a = solve(&m, gate).map_err(|e| e.to_string())?;
        let want = brute_force_total(&m, gate);
        ensure(a.total(&m) == want, format!("case {case}: total {} vs brute force {want}", a.total(&m)))?;
        ensure(a.matches.iter().all(|&(r, c)| m.get(r, c) >= gate), format!("case {case}: sub-gate match"))?;
    }
    within(10, t)?;
    Ok("500 random matrices equal brute force".into())
}

fn metrics_criterion() -> Outcome {
    let t = Instant::now();
    let perfect = golden::load("perfect").summary();
    ensure(
        [perfect.hota, perfect.deta, perfect.assa, perfect.mota, perfect.idf1] == [1.0; 5],
        format!("perfect: {perfect:?}"),
    )?;
    let fp = golden::load("single_fp").clear;
    ensure(fp.mota == 0.9, format!("single-FP MOTA {}", fp.mota))?;
    let swap = golden::load("id_swap").clear;
    ensure(swap.mota == 0.9 && swap.idsw == 2, format!("id-swap {swap:?}"))?;
    let split = golden::load("split_track");
    ensure(split.identity.idf1 == 0.5, format!("split IDF1 {}", split.identity.idf1))?;
    ensure((split.hota.hota - 0.5f64.sqrt()).abs() <= 1e-9, format!("split HOTA {}", split.hota.hota))?;

    let alphas = alpha_grid();
    let mut imperfect = 0;
    for seed in 0..50 {
        let (gt, pred) = oracle::random_instance(seed);
        let got = idf1(&gt, &pred, 0.5).map_err(|e| e.to_string())?;
        let (idtp, want) = oracle::idf1(&gt, &pred, 0.5);
        ensure(got.idtp == idtp && got.idf1 == want, format!("seed {seed}: IDF1 {} vs {want}", got.idf1))?;
        let h = hota(&gt, &pred).map_err(|e| e.to_string())?;
        let want = oracle::assa(&gt, &pred, &alphas);
        for (row, w) in h.per_alpha.iter().zip(&want) {
            ensure((row.assa - w).abs() <= 1e-12, format!("seed {seed} alpha {}: AssA {} vs {w}", row.alpha, row.assa))?;
        }
        imperfect += usize::from(got.idf1 < 1.0);
    }
    ensure(imperfect >= 25, format!("only {imperfect} of 50 random instances are imperfect"))?;
    within(30, t)?;
    Ok(format!("fixtures exact; 50 random instances agree ({imperfect} imperfect)"))
}

fn reporting() -> TrackerConfig {
    TrackerConfig { min_hits: 1, ..Default::default() }
}

fn closed_loop_criterion() -> Outcome {
    let t = Instant::now();
    let cfg = ScenarioConfig { n_objects: 5, n_frames: 100, ..Default::default() };
    let s = synth::generate(&cfg).map_err(|e| e.to_string())?;
    let out = Tracker::new(reporting()).unwrap().run(&s.detections, 1..=100).map_err(|e| e.to_string())?;
    let r = evaluate(&s.gt, &out, DEFAULT_IOU_THRESH).map_err(|e| e.to_string())?;
    ensure(
        r.hota.hota == 1.0 && r.clear.mota == 1.0 && r.identity.idf1 == 1.0,
        format!("noiseless distinct: {:?}", r.summary()),
    )?;

    let cross = ScenarioConfig {
        n_objects: 2,
        n_frames: 80,
        motion: MotionPattern::SinusoidalCrossing { amplitude: 0.0, period: 1.0 },
        feature_mode: FeatureMode::Identical,
        ..Default::default()
    };
    let s = synth::generate(&cross).map_err(|e| e.to_string())?;
    let mut tracker = Tracker::new(reporting()).unwrap();
    let mut out = TrackFrames::new();
    for f in 1..=cross.n_frames {
        out.insert(f, tracker.step(f, &s.detections[&f]).map_err(|e| e.to_string())?);
        let w = tracker.last_diagnostics().unwrap().weights;
        ensure(w.w_a == 0.0 && w.w_m == 2.0, format!("frame {f}: weights {w:?}"))?;
    }
    let r = evaluate(&s.gt, &out, DEFAULT_IOU_THRESH).map_err(|e| e.to_string())?;
    ensure(r.clear.idsw == 0, format!("crossing: {} id switches", r.clear.idsw))?;
    within(5, t)?;
    Ok("noiseless HOTA = MOTA = IDF1 = 1; crossing 0 IDSW with (w_a, w_m) = (0, 2) every frame".into())
}

/// Track a single occluded object; returns (distinct ids over the run, one-step error after recovery).
fn occlusion_run(use_oru: bool) -> Result<(usize, f64), String> {
    let cfg = ScenarioConfig {
        n_objects: 1,
        n_frames: 40,
        occlusion_windows: vec![Occlusion { object: 0, start: 20, end: 29 }],
        ..Default::default()
    };
    let s = synth::generate(&cfg).map_err(|e| e.to_string())?;
    let mut tracker = Tracker::new(TrackerConfig { use_oru, ..reporting() }).unwrap();
    let out = tracker.run(&s.detections, 1..=30).map_err(|e| e.to_string())?;
    let ids: std::collections::BTreeSet<u64> = out.values().flatten().map(|(id, _)| *id).collect();
    let track = tracker.tracks().first().ok_or("track lost")?;
    let (_, predicted) = MotionModel::default().predict(&track.state);
    let (px, py) = predicted.center();
    let (tx, ty) = s.gt[&31][0].1.center();
    Ok((ids.len(), (px - tx).hypot(py - ty)))
}

fn oru_criterion() -> Outcome {
    let t = Instant::now();
    let (ids_on, err_on) = occlusion_run(true)?;
    let (_, err_off) = occlusion_run(false)?;
    ensure(ids_on == 1, format!("{ids_on} ids reported with re-update on"))?;
    let ratio = err_off / err_on;
    ensure(
        ratio >= 5.0,
        format!("one-step error {err_on:.3e} with re-update vs {err_off:.3e} without: ratio {ratio:.2} < 5"),
    )?;
    within(5, t)?;
    Ok(format!("id kept; error ratio {ratio:.2}"))
}

fn qgm_criterion() -> Outcome {
    let t = Instant::now();
    let pool = synth::proposal_pool(&ProposalPoolConfig { n_frames: 3, ..Default::default() }).map_err(|e| e.to_string())?;
    let cfg = FilterConfig::default();
    ensure(cfg.kappa == 5 && cfg.t_gen == 0.3 && cfg.tau_sim == 0.85, format!("defaults {cfg:?}"))?;
    for frame in 1..=3 {
        let idx: Vec<usize> = (0..pool.proposals.len()).filter(|&i| pool.proposals[i].frame == frame).collect();
        let props: Vec<_> = idx.iter().map(|&i| pool.proposals[i].clone()).collect();
        let kinds: Vec<ProposalKind> = idx.iter().map(|&i| pool.kinds[i]).collect();
        let kept = filter_proposals(&props, &cfg).map_err(|e| e.to_string())?;
        let queries = select_queries(&props, cfg.kappa).map_err(|e| e.to_string())?;
        ensure(queries.len() == 5 && queries.iter().all(|q| kept.contains(q)), "queries missing from output")?;
        for c in select_candidates(&props, cfg.t_gen) {
            match kinds[c] {
                ProposalKind::Class => ensure(kept.contains(&c), format!("frame {frame}: class candidate {c} rejected"))?,
                ProposalKind::Distractor => ensure(!kept.contains(&c), format!("frame {frame}: distractor {c} accepted"))?,
                ProposalKind::Background => {}
            }
        }
        let mut previous: Option<Vec<usize>> = None;
        for step in 0..20 {
            let tau_sim = step as f64 / 19.0;
            let mut kept = filter_proposals(&props, &FilterConfig { tau_sim, ..cfg.clone() }).map_err(|e| e.to_string())?;
            kept.sort_unstable();
            if let Some(prev) = &previous {
                ensure(kept.iter().all(|k| prev.contains(k)), format!("tau_sim {tau_sim}: output grew"))?;
            }
            previous = Some(kept);
        }
    }
    within(5, t)?;
    Ok("recall 100%, distractors 0%, queries kept, monotone over 20 tau_sim values".into())
}

fn theta_criterion() -> Outcome {
    let cfg = ScenarioConfig {
        seed: 7,
        n_objects: 8,
        n_frames: 150,
        det_noise_std: 2.0,
        fp_rate: 0.5,
        fn_rate: 0.05,
        feature_noise_std: 0.05,
        motion: MotionPattern::SinusoidalCrossing { amplitude: 20.0, period: 40.0 },
        ..Default::default()
    };
    let s = synth::generate(&cfg).map_err(|e| e.to_string())?;
    let mut scores = Vec::new();
    for theta_deg in [22.5, 45.0, 67.5, 80.0] {
        let out = Tracker::new(TrackerConfig { theta_deg, ..Default::default() })
            .unwrap()
            .run(&s.detections, 1..=cfg.n_frames)
            .map_err(|e| e.to_string())?;
        scores.push(100.0 * evaluate(&s.gt, &out, DEFAULT_IOU_THRESH).map_err(|e| e.to_string())?.hota.hota);
    }
    let spread = scores.iter().cloned().fold(f64::MIN, f64::max) - scores.iter().cloned().fold(f64::MAX, f64::min);
    let text = scores.iter().map(|s| format!("{s:.2}")).collect::<Vec<_>>().join(", ");
    ensure(spread < 2.0, format!("HOTA [{text}] spread {spread:.2} points"))?;
    Ok(format!("HOTA [{text}], spread {spread:.2} points"))
}

fn masort(args: &[&str]) -> Result<std::process::Output, String> {
    let out = Command::new(masort_bin()).args(args).env_remove("MASORT_OUT").output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("masort {args:?} failed: {}", String::from_utf8_lossy(&out.stderr)));
    }
    Ok(out)
}

fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 temp path")
}

fn write_scenario(dir: &Path) -> Result<PathBuf, String> {
    let path = dir.join("scenario.json");
    let text = r#"{"scenario": {"seed": 3, "n_objects": 5, "n_frames": 100},
                   "proposals": {"seed": 4, "n_frames": 4}}"#;
    fs::write(&path, text).map_err(|e| e.to_string())?;
    Ok(path)
}

fn reference_criterion() -> Outcome {
    let (checked, bad) = golden::compare_all(1e-4);
    if let Some(first) = bad.first() {
        return Err(format!("{} golden mismatches, first: {first}", bad.len()));
    }

    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let scenario = write_scenario(tmp.path())?;
    let data = tmp.path().join("data");
    masort(&["synth", p(&scenario), "--out", p(&data)])?;
    let trk = tmp.path().join("trk");
    masort(&["track", p(&data.join("det.txt")), p(&data.join("features.txt")), "--min-hits", "1", "--out", p(&trk)])?;
    let ev = tmp.path().join("ev");
    masort(&["eval", p(&data.join("gt.txt")), p(&trk.join("results.txt")), "--out", p(&ev)])?;
    let metrics: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(ev.join("metrics.json")).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    for key in ["HOTA", "MOTA", "IDF1"] {
        ensure(metrics[key] == 1.0, format!("pipeline {key} = {}", metrics[key]))?;
    }
    Ok(format!("{checked} golden sequences within 1e-4; synth | track | eval pipeline scores 1.0"))
}

fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut files = BTreeMap::new();
    for entry in fs::read_dir(dir).expect("output dir") {
        let path = entry.expect("dir entry").path();
        files.insert(path.clone(), fs::read(&path).expect("output file"));
    }
    files
}

fn determinism_criterion() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let scenario = write_scenario(tmp.path())?;
    let data = tmp.path().join("data");
    let filtered = tmp.path().join("filtered");
    let trk = tmp.path().join("trk");
    let ev = tmp.path().join("ev");
    let runs: Vec<(&str, Vec<String>, &PathBuf)> = vec![
        ("synth", vec!["synth".into(), p(&scenario).into(), "--out".into(), p(&data).into()], &data),
        (
            "filter",
            vec!["filter".into(), p(&data.join("proposals.txt")).into(), "--out".into(), p(&filtered).into()],
            &filtered,
        ),
        (
            "track",
            vec![
                "track".into(),
                p(&filtered.join("det.txt")).into(),
                p(&filtered.join("features.txt")).into(),
                "--out".into(),
                p(&trk).into(),
            ],
            &trk,
        ),
        (
            "eval",
            vec!["eval".into(), p(&data.join("gt.txt")).into(), p(&trk.join("results.txt")).into(), "--out".into(), p(&ev).into()],
            &ev,
        ),
    ];
    for (name, args, dir) in &runs {
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let first_out = masort(&args)?.stdout;
        let first = snapshot(dir);
        let second_out = masort(&args)?.stdout;
        ensure(first_out == second_out, format!("{name}: stdout differs"))?;
        ensure(first == snapshot(dir), format!("{name}: output files differ between runs"))?;
        ensure(first.keys().any(|k| k.ends_with("manifest.json")), format!("{name}: no manifest"))?;
    }
    Ok("synth, filter, track, eval: byte-identical outputs and manifests".into())
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("adaptive-weight law", weights_criterion),
        ("assignment oracle", assignment_criterion),
        ("metrics oracle", metrics_criterion),
        ("closed-loop tracking", closed_loop_criterion),
        ("virtual-path re-update", oru_criterion),
        ("query-guided filter", qgm_criterion),
        ("theta robustness", theta_criterion),
        ("reference evaluator", reference_criterion),
        ("determinism", determinism_criterion),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (n, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {} {name}: PASS ({secs:.2}s) {detail}", n + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({secs:.2}s) {detail}", n + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
