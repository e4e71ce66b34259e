use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use masort::metrics::{self, DEFAULT_IOU_THRESH};
use masort::mot_io::{self, FrameMap};
use masort::qgm::{self, FilterConfig, Proposal};
use masort::synth::{self, ProposalPoolConfig, ScenarioConfig};
use masort::tracker::{Detection, Tracker, TrackerConfig};

use crate::manifest::RunManifest;
use crate::settings::{ConfigFile, Resolver};
use crate::{Cli, CliError, Command, OUT_ENV};

const DEFAULT_OUT: &str = "masort-out";

pub fn run(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let out = output_dir(cli.out, &file);
    fs::create_dir_all(&out)?;
    let mut settings = Resolver::new(&file);
    let manifest = match cli.command {
        Command::Filter {
            proposals,
            kappa,
            t_gen,
            tau_sim,
        } => {
            let cfg = FilterConfig {
                kappa: settings.resolve("kappa", kappa, qgm::DEFAULT_KAPPA)?,
                t_gen: settings.resolve("t_gen", t_gen, qgm::DEFAULT_T_GEN)?,
                tau_sim: settings.resolve("tau_sim", tau_sim, qgm::DEFAULT_TAU_SIM)?,
            };
            filter(&proposals, &cfg, &out, settings.effective)?
        }
        Command::Track {
            detections,
            features,
            theta,
            lambda,
            gate,
            min_hits,
            max_age,
            delta_t,
            alpha_ema,
        } => {
            let d = TrackerConfig::default();
            let cfg = TrackerConfig {
                theta_deg: settings.resolve("theta", theta, d.theta_deg)?,
                lambda: settings.resolve("lambda", lambda, d.lambda)?,
                gate: settings.resolve("gate", gate, d.gate)?,
                min_hits: settings.resolve("min_hits", min_hits, d.min_hits)?,
                max_age: settings.resolve("max_age", max_age, d.max_age)?,
                delta_t: settings.resolve("delta_t", delta_t, d.delta_t)?,
                alpha_ema: settings.resolve("alpha_ema", alpha_ema, d.alpha_ema)?,
                ..d
            };
            track(&detections, features.as_deref(), cfg, &out, settings.effective)?
        }
        Command::Eval { gt, results, iou_thresh } => {
            let thresh = settings.resolve("iou_thresh", iou_thresh, DEFAULT_IOU_THRESH)?;
            eval(&gt, &results, thresh, &out, settings.effective)?
        }
        Command::Synth { scenario } => synth(&scenario, &out, settings.effective)?,
    };
    manifest.write(&out)?;
    Ok(())
}

/// `--out`, then the config file, then the environment override, then the default.
fn output_dir(flag: Option<PathBuf>, file: &ConfigFile) -> PathBuf {
    flag.or_else(|| file.raw("out").map(PathBuf::from))
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn filter(
    path: &Path,
    cfg: &FilterConfig,
    out: &Path,
    config: BTreeMap<String, String>,
) -> Result<RunManifest, CliError> {
    cfg.validate()?;
    let proposals = mot_io::read_proposals(path)?;
    let mut by_frame: BTreeMap<u32, Vec<Proposal>> = BTreeMap::new();
    for p in proposals {
        by_frame.entry(p.frame).or_default().push(p);
    }
    let mut kept: FrameMap<Detection> = FrameMap::new();
    for (frame, props) in &by_frame {
        let dets = qgm::filter_proposals(props, cfg)?
            .into_iter()
            .map(|i| Detection::new(props[i].bbox, props[i].s_gen).with_feature(props[i].feature.clone()))
            .collect();
        kept.insert(*frame, dets);
    }
    let det_path = out.join("det.txt");
    let feat_path = out.join("features.txt");
    fs::write(&det_path, mot_io::format_detections(&kept))?;
    fs::write(&feat_path, mot_io::format_features(&kept)?)?;

    let mut m = RunManifest::new("filter", config);
    m.input(path)?;
    m.output(&det_path)?;
    m.output(&feat_path)?;
    Ok(m)
}

fn track(
    det_path: &Path,
    feat_path: Option<&Path>,
    cfg: TrackerConfig,
    out: &Path,
    config: BTreeMap<String, String>,
) -> Result<RunManifest, CliError> {
    let tracker = Tracker::new(cfg)?;
    let mut dets = mot_io::read_detections(det_path)?;
    if dets.skipped > 0 {
        log::warn!("{} detections with non-positive size were skipped", dets.skipped);
    }
    if let Some(fp) = feat_path {
        mot_io::attach_features(&mut dets.frames, &mot_io::read_features(fp)?)?;
    }
    let results = match (dets.frames.keys().next(), dets.frames.keys().next_back()) {
        (Some(&first), Some(&last)) => {
            let mut tracker = tracker;
            tracker.run(&dets.frames, first..=last)?
        }
        _ => Default::default(),
    };
    let res_path = out.join("results.txt");
    mot_io::write_results(&res_path, &results)?;

    let mode = if feat_path.is_some() { "appearance" } else { "motion-only" };
    let mut m = RunManifest::new("track", config);
    m.mode = Some(mode.into());
    m.input(det_path)?;
    if let Some(fp) = feat_path {
        m.input(fp)?;
    }
    m.output(&res_path)?;
    Ok(m)
}

fn eval(
    gt_path: &Path,
    res_path: &Path,
    thresh: f64,
    out: &Path,
    config: BTreeMap<String, String>,
) -> Result<RunManifest, CliError> {
    let gt = mot_io::read_ground_truth(gt_path)?;
    let results = mot_io::read_results(res_path)?;
    let report = metrics::evaluate(&gt, &results, thresh)?;
    print!("{report}");
    let json_path = out.join("metrics.json");
    fs::write(&json_path, report.to_json() + "\n")?;

    let mut m = RunManifest::new("eval", config);
    m.input(gt_path)?;
    m.input(res_path)?;
    m.output(&json_path)?;
    Ok(m)
}

/// Scenario description for `masort synth`.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SynthRequest {
    scenario: Option<ScenarioConfig>,
    proposals: Option<ProposalPoolConfig>,
}

fn synth(path: &Path, out: &Path, mut config: BTreeMap<String, String>) -> Result<RunManifest, CliError> {
    let text = fs::read_to_string(path)?;
    let request: SynthRequest = serde_json::from_str(&text)
        .map_err(|e| masort::Error::Schema(format!("{}: {e}", path.display())))?;
    if request.scenario.is_none() && request.proposals.is_none() {
        return Err(masort::Error::Schema(format!("{}: needs a 'scenario' or 'proposals' section", path.display())).into());
    }
    let mut written = Vec::new();
    if let Some(cfg) = &request.scenario {
        let files = synth::generate(cfg)?.write(out)?;
        config.insert("seed".into(), cfg.seed.to_string());
        written.extend([files.gt, files.detections, files.features]);
    }
    if let Some(cfg) = &request.proposals {
        let p = out.join("proposals.txt");
        synth::proposal_pool(cfg)?.write(&p)?;
        config.insert("proposal_seed".into(), cfg.seed.to_string());
        written.push(p);
    }
    let mut m = RunManifest::new("synth", config);
    m.input(path)?;
    for p in &written {
        m.output(p)?;
    }
    Ok(m)
}
