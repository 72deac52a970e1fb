use std::fs;
use std::io::Write;
use std::path::Path;

use super::config::{ObstacleKind, ScenarioConfig};
use super::render::render_frame_seeded;
use super::{derive_seed, run_scenario, RunLog, SimError};

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetEntry {
    pub file: String,
    pub vehicle_x: f64,
    pub obstacle: ObstacleKind,
    pub ood: bool,
}

/// Writes `n_clean` empty-lane frames and `n_ood` frames per obstacle kind
/// with the obstacle inside the detector's view, as `frame_NNNNN.ppm`, plus
/// `index.csv` with columns `file,vehicle_x,obstacle,ood`.
pub fn render_dataset(
    cfg: &ScenarioConfig,
    out_dir: &Path,
    n_clean: usize,
    n_ood: usize,
) -> Result<Vec<DatasetEntry>, SimError> {
    fs::create_dir_all(out_dir)?;
    let mut entries = Vec::new();
    let mut jobs: Vec<(ObstacleKind, f64)> = (0..n_clean)
        .map(|i| {
            (
                ObstacleKind::None,
                cfg.obstacle_distance * i as f64 / n_clean as f64,
            )
        })
        .collect();
    let zone_start = cfg.obstacle_distance - cfg.risk_zone;
    for kind in ObstacleKind::OBSTACLES {
        for i in 0..n_ood {
            // Spread across the risk zone, stopping short of contact.
            let x = zone_start + (cfg.risk_zone - 0.05) * (i as f64 + 0.5) / n_ood as f64;
            jobs.push((kind, x));
        }
    }
    let mut index = fs::File::create(out_dir.join("index.csv"))?;
    writeln!(index, "file,vehicle_x,obstacle,ood")?;
    for (i, (kind, x)) in jobs.into_iter().enumerate() {
        let scene = ScenarioConfig {
            obstacle: kind,
            ..cfg.clone()
        };
        let img = render_frame_seeded(&scene, x, derive_seed(cfg.seed, 0xDA7A_0000 + i as u64))?;
        let file = format!("frame_{i:05}.ppm");
        img.save_pnm(&out_dir.join(&file))?;
        let ood = kind != ObstacleKind::None;
        writeln!(index, "{file},{x:.6},{},{}", kind.as_str(), u8::from(ood))?;
        entries.push(DatasetEntry {
            file,
            vehicle_x: x,
            obstacle: kind,
            ood,
        });
    }
    Ok(entries)
}

/// Reads `index.csv` from a dataset directory.
pub fn read_dataset_index(dir: &Path) -> Result<Vec<DatasetEntry>, SimError> {
    let text = fs::read_to_string(dir.join("index.csv"))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |m: &str| SimError::Config(format!("index.csv line {}: {m}", i + 1));
        let fields: Vec<&str> = line.split(',').collect();
        let [file, x, obstacle, ood] = fields[..] else {
            return Err(bad("expected 4 fields"));
        };
        out.push(DatasetEntry {
            file: file.to_string(),
            vehicle_x: x.parse().map_err(|_| bad("bad vehicle_x"))?,
            obstacle: ObstacleKind::parse(obstacle)?,
            ood: match ood {
                "0" => false,
                "1" => true,
                _ => return Err(bad("ood must be 0 or 1")),
            },
        });
    }
    Ok(out)
}

/// Per-run configurations: runs are split into equal consecutive blocks, one
/// per obstacle kind, and each run gets its own derived seed.
pub fn campaign_configs(
    base: &ScenarioConfig,
    n_runs: usize,
    obstacles: &[ObstacleKind],
) -> Result<Vec<ScenarioConfig>, SimError> {
    if n_runs == 0 {
        return Err(SimError::Config("a campaign needs at least one run".into()));
    }
    if obstacles.is_empty() {
        return Err(SimError::Config(
            "a campaign needs at least one obstacle kind".into(),
        ));
    }
    (0..n_runs)
        .map(|i| {
            let cfg = ScenarioConfig {
                seed: derive_seed(base.seed, i as u64 + 1),
                obstacle: obstacles[i * obstacles.len() / n_runs],
                ..base.clone()
            };
            cfg.validate()?;
            Ok(cfg)
        })
        .collect()
}

/// Runs a campaign sequentially, in run order.
pub fn run_campaign(
    base: &ScenarioConfig,
    n_runs: usize,
    obstacles: &[ObstacleKind],
) -> Result<Vec<RunLog>, SimError> {
    campaign_configs(base, n_runs, obstacles)?
        .iter()
        .map(run_scenario)
        .collect()
}
