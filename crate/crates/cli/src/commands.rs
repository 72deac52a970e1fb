use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::Serialize;

use oodsim::analysis::svg::{score_trace_svg, sweep_box_svg};
use oodsim::analysis::{
    read_run_logs, stopping_stats_from_logs, threshold_sweep, timing_report, write_campaign,
    write_run, write_sweep_csv, AnalysisError,
};
use oodsim::frame::Frame;
use oodsim::ood::{calibrate_threshold, select_detectors, DetectorConfig, Scorer};
use oodsim::runlog::{read_csv, HopLog, Stage};
use oodsim::sim::{
    base_scorer, build_scorer, calibrate_from_kl, calibration_frames, campaign_configs,
    read_dataset_index, render_dataset, run_scenario_with, score_calibration_frames, ObstacleKind,
    ScenarioConfig, ScorerKind, SimError,
};
use oodsim::vision::{estimate_steering, hough::accumulate, Image};

use crate::{Cli, Command, Common, Invariant, ScorerArg, DEFAULT_SEED};

pub fn run(cli: &Cli) -> Result<()> {
    let c = &cli.common;
    match &cli.command {
        Command::RenderDataset { clean, ood, debug } => render(c, *clean, *ood, *debug),
        Command::Calibrate { frames, n } => cmd_calibrate(c, frames.as_deref(), *n),
        Command::SelectDetectors { frames, n, k } => cmd_select(c, frames.as_deref(), *n, *k),
        Command::Simulate { detector, realtime } => simulate(c, detector.as_deref(), *realtime),
        Command::Campaign {
            runs,
            obstacles,
            detector,
        } => campaign(c, *runs, obstacles, detector.as_deref()),
        Command::Sweep { logs, thresholds } => sweep(c, logs, thresholds),
        Command::Report { logs } => report(c, logs),
        Command::Replay { log } => replay(log),
    }
}

/// The scenario after applying config file, then command-line overrides.
pub fn load_config(c: &Common) -> Result<ScenarioConfig> {
    let mut cfg = match &c.config {
        Some(p) => ScenarioConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => ScenarioConfig {
            seed: DEFAULT_SEED,
            ..ScenarioConfig::default()
        },
    };
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    if let Some(s) = c.scorer {
        cfg.detector.scorer = match s {
            ScorerArg::Vae => ScorerKind::Vae,
            ScorerArg::Oracle => ScorerKind::Oracle,
        };
    }
    if let Some(w) = &c.weights {
        cfg.detector.weights = Some(w.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn out_dir(c: &Common) -> Result<&Path> {
    fs::create_dir_all(&c.out).with_context(|| format!("creating {}", c.out.display()))?;
    Ok(&c.out)
}

fn render(c: &Common, clean: usize, ood: usize, debug: bool) -> Result<()> {
    let cfg = load_config(c)?;
    let out = out_dir(c)?;
    let entries = render_dataset(&cfg, out, clean, ood)?;
    if debug {
        let dbg = out.join("debug");
        fs::create_dir_all(&dbg)?;
        for e in &entries {
            let img = Image::load_pnm(&out.join(&e.file))?;
            let trace = estimate_steering(&img, &cfg.vision)?;
            let stem = e.file.trim_end_matches(".ppm");
            trace.mask.save_pnm(&dbg.join(format!("{stem}_mask.pgm")))?;
            trace
                .edges
                .save_pnm(&dbg.join(format!("{stem}_edges.pgm")))?;
            accumulate(&trace.edges, &cfg.vision.hough)?
                .to_image()
                .save_pnm(&dbg.join(format!("{stem}_hough.pgm")))?;
        }
    }
    let n_ood = entries.iter().filter(|e| e.ood).count();
    println!(
        "wrote {} frames ({} clean, {} ood) to {}",
        entries.len(),
        entries.len() - n_ood,
        n_ood,
        out.display()
    );
    Ok(())
}

/// In-distribution frames: the clean half of a dataset directory, or frames
/// rendered on the fly.
fn in_distribution_frames(
    cfg: &ScenarioConfig,
    dir: Option<&Path>,
    n: Option<usize>,
) -> Result<Vec<Frame>> {
    let needs_image = cfg.detector.scorer == ScorerKind::Vae;
    let frames = match dir {
        None => calibration_frames(
            cfg,
            n.unwrap_or(cfg.detector.calibration_frames),
            needs_image,
        )?,
        Some(dir) => {
            let mut frames = Vec::new();
            for e in read_dataset_index(dir)?.into_iter().filter(|e| !e.ood) {
                let image = if needs_image {
                    let path = dir.join(&e.file);
                    Some(Arc::new(
                        Image::load_pnm(&path)
                            .with_context(|| format!("reading {}", path.display()))?,
                    ))
                } else {
                    None
                };
                frames.push(Frame {
                    seq: frames.len() as u64 + 1,
                    capture_ns: 0,
                    vehicle_x: Some(e.vehicle_x),
                    image,
                });
                if n.is_some_and(|n| frames.len() >= n) {
                    break;
                }
            }
            frames
        }
    };
    if frames.is_empty() {
        bail!("the calibration set is empty");
    }
    Ok(frames)
}

fn cmd_calibrate(c: &Common, frames: Option<&Path>, n: Option<usize>) -> Result<()> {
    let cfg = load_config(c)?;
    let frames = in_distribution_frames(&cfg, frames, n)?;
    let kl = score_calibration_frames(&cfg, &frames)?;
    let cal = calibrate_from_kl(
        &kl,
        cfg.detector.quantile,
        cfg.detector.k,
        cfg.detector.subset.clone(),
    )?;
    let out = out_dir(c)?;
    write_json(&out.join("detector.json"), &cal.detector)?;
    println!("calibration frames: {}", cal.scores.len());
    println!("subset: {:?}", cal.detector.subset);
    for q in [0.5, 0.8, 0.9, 0.95, 0.99] {
        println!(
            "p{:<3} {:.6}",
            (q * 100.0) as u32,
            calibrate_threshold(&cal.scores, q)?
        );
    }
    println!(
        "threshold (q={}): {:.6}",
        cfg.detector.quantile, cal.detector.threshold
    );
    Ok(())
}

#[derive(Serialize)]
struct Selection {
    k: usize,
    subset: Vec<usize>,
    mean_kl: Vec<f64>,
}

fn cmd_select(c: &Common, frames: Option<&Path>, n: Option<usize>, k: Option<usize>) -> Result<()> {
    let cfg = load_config(c)?;
    let frames = in_distribution_frames(&cfg, frames, n)?;
    let kl = score_calibration_frames(&cfg, &frames)?;
    let k = k.unwrap_or(cfg.detector.k);
    let subset = select_detectors(&kl, k)?;
    let dim = kl[0].len();
    let mean_kl: Vec<f64> = (0..dim)
        .map(|j| kl.iter().map(|r| r[j]).sum::<f64>() / kl.len() as f64)
        .collect();
    for &j in &subset {
        println!("dim {j:>3}  mean KL {:.6}", mean_kl[j]);
    }
    write_json(
        &out_dir(c)?.join("subset.json"),
        &Selection { k, subset, mean_kl },
    )
}

fn read_detector(path: &Path) -> Result<DetectorConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let det: DetectorConfig =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    det.validate()?;
    Ok(det)
}

fn scorer_for(
    cfg: &ScenarioConfig,
    detector: Option<&DetectorConfig>,
) -> Result<Arc<dyn Scorer>, SimError> {
    match detector {
        Some(d) => base_scorer(cfg)?.with_config(d.clone()),
        None => build_scorer(cfg),
    }
}

fn simulate(c: &Common, detector: Option<&Path>, realtime: Option<f64>) -> Result<()> {
    let cfg = load_config(c)?;
    let det = detector.map(read_detector).transpose()?;
    let scorer = scorer_for(&cfg, det.as_ref())?;
    let log = match realtime {
        Some(scale) => oodsim::sim::realtime::run_realtime(&cfg, scorer, scale)?,
        None => run_scenario_with(&cfg, scorer.as_ref())?,
    };
    let out = out_dir(c)?;
    let files = write_run(out, 0, &log)?;
    if c.emit_svg {
        fs::write(
            out.join("scores.svg"),
            score_trace_svg(std::slice::from_ref(&log)),
        )?;
    }
    let o = &log.outcome;
    println!("end: {:?} at {:.3} s", o.end_reason, o.end_ns as f64 * 1e-9);
    match o.stopping_distance {
        Some(d) => println!("stopping distance: {d:.4} m (collision: {})", o.collision),
        None => println!("no obstacle; final position {:.4} m", o.x_final),
    }
    println!("frames scored: {}", o.frames_scored);
    println!("log: {}", files.json.display());
    Ok(())
}

fn campaign(c: &Common, runs: usize, obstacles: &[String], detector: Option<&Path>) -> Result<()> {
    let base = load_config(c)?;
    let kinds = obstacles
        .iter()
        .map(|s| ObstacleKind::parse(s.trim()))
        .collect::<Result<Vec<_>, _>>()?;
    let cfgs = campaign_configs(&base, runs, &kinds)?;
    let det = detector.map(read_detector).transpose()?;
    let logs = cfgs
        .par_iter()
        .map(|cfg| {
            let scorer = scorer_for(cfg, det.as_ref())?;
            run_scenario_with(cfg, scorer.as_ref())
        })
        .collect::<Result<Vec<_>, SimError>>()?;
    let out = out_dir(c)?;
    let summary = write_campaign(out, &logs)?;
    if c.emit_svg {
        fs::write(out.join("scores.svg"), score_trace_svg(&logs))?;
    }
    println!("runs: {}", summary.runs);
    println!(
        "frames scored per run: {}..={}",
        summary.frames_scored_min, summary.frames_scored_max
    );
    if let Some(s) = &summary.stopping {
        println!(
            "stopped {}/{} (success {:.1}%), median {:.4} m, 95% CI [{:.4}, {:.4}]",
            s.runs - s.collisions,
            s.runs,
            100.0 * s.success_rate,
            s.median,
            s.ci95_low,
            s.ci95_high
        );
    }
    Ok(())
}

/// Zero plus eleven evenly spaced points over the recorded score range.
fn default_thresholds(logs: &[oodsim::sim::RunLog]) -> Vec<f64> {
    let scores = logs.iter().flat_map(|l| l.ood.iter().map(|r| r.score));
    let (lo, hi) = scores.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
        (lo.min(s), hi.max(s))
    });
    let mut out = vec![0.0];
    if lo.is_finite() && hi.is_finite() {
        out.extend((0..=10).map(|i| lo + (hi - lo) * i as f64 / 10.0));
    }
    out.sort_by(f64::total_cmp);
    out.dedup();
    out
}

fn load_logs(dir: &Path) -> Result<Vec<oodsim::sim::RunLog>> {
    let logs = read_run_logs(dir)?;
    if logs.is_empty() {
        return Err(AnalysisError::Empty)
            .with_context(|| format!("no run logs in {}", dir.display()));
    }
    Ok(logs)
}

fn sweep(c: &Common, logs_dir: &Path, thresholds: &[f64]) -> Result<()> {
    let logs = load_logs(logs_dir)?;
    let thresholds = if thresholds.is_empty() {
        default_thresholds(&logs)
    } else {
        thresholds.to_vec()
    };
    let result = threshold_sweep(&logs, &thresholds)?;
    for pair in result.rows.windows(2) {
        if pair[1].collisions < pair[0].collisions && pair[1].threshold > pair[0].threshold {
            return Err(Invariant(format!(
                "collisions fell from {} to {} as the threshold rose",
                pair[0].collisions, pair[1].collisions
            ))
            .into());
        }
    }
    let out = out_dir(c)?;
    let mut csv = Vec::new();
    write_sweep_csv(&result, &mut csv)?;
    fs::write(out.join("sweep.csv"), csv)?;
    write_json(&out.join("sweep.json"), &result)?;
    if c.emit_svg {
        fs::write(out.join("sweep.svg"), sweep_box_svg(&result))?;
    }
    println!(
        "{:>12} {:>6} {:>10} {:>14} {:>8}",
        "threshold", "runs", "collisions", "median_dist_m", "early"
    );
    for r in &result.rows {
        println!(
            "{:>12.6} {:>6} {:>10} {:>14.4} {:>8}",
            r.threshold,
            r.runs.len(),
            r.collisions,
            r.median_distance,
            r.early_triggers
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct Report {
    stopping: Option<oodsim::analysis::StoppingStats>,
    timing: oodsim::analysis::TimingSummary,
}

fn report(c: &Common, logs_dir: &Path) -> Result<()> {
    let logs = load_logs(logs_dir)?;
    let stopping = match stopping_stats_from_logs(&logs) {
        Ok(s) => Some(s),
        Err(AnalysisError::NoObstacle { .. }) => None,
        Err(e) => return Err(e.into()),
    };
    let timing = timing_report(&logs)?;
    if let Some(s) = &stopping {
        println!(
            "runs {}  collisions {}  success {:.1}%  median {:.4} m  95% CI [{:.4}, {:.4}]",
            s.runs,
            s.collisions,
            100.0 * s.success_rate,
            s.median,
            s.ci95_low,
            s.ci95_high
        );
    }
    println!(
        "{:<18} {:>6} {:>12} {:>12} {:>12}",
        "hop", "n", "median_ms", "p95_ms", "max_ms"
    );
    for h in &timing.hops {
        println!(
            "{:<18} {:>6} {:>12.3} {:>12.3} {:>12.3}",
            h.name,
            h.count,
            h.median_ns * 1e-6,
            h.p95_ns as f64 * 1e-6,
            h.max_ns as f64 * 1e-6
        );
    }
    if let Some(d) = &timing.dominant {
        println!("dominant hop: {d}");
    }
    write_json(
        &out_dir(c)?.join("report.json"),
        &Report { stopping, timing },
    )
}

fn replay(path: &PathBuf) -> Result<()> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let events = read_csv(std::io::BufReader::new(file))?;
    let log = HopLog::from_events(events)?;
    let seqs: Vec<u64> = log.seqs().collect();
    let mut out = std::io::stdout().lock();
    let mut emit = |line: String| match writeln!(out, "{line}") {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => other,
    };
    emit(format!(
        "{} events over {} messages",
        log.events().len(),
        seqs.len()
    ))?;
    for seq in seqs {
        let stages = log.stages_of(seq).expect("seq listed by the log");
        let mut line = format!("seq {seq:>5}");
        let mut prev: Option<(Stage, u64)> = None;
        for (&stage, &t) in stages {
            if let Some((p, pt)) = prev {
                line.push_str(&format!(
                    "  {}->{} {:.3} ms",
                    p.as_str(),
                    stage.as_str(),
                    (t - pt) as f64 * 1e-6
                ));
            }
            prev = Some((stage, t));
        }
        emit(line)?;
    }
    Ok(())
}
