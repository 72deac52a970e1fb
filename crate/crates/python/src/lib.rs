//! Python bindings. Images cross the boundary as raw interleaved `bytes`
//! together with width, height and channel count.

use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict};

use oodsim::analysis::{self, StoppingStats};
use oodsim::nn::{load_weights, save_weights, EncoderSpec, LatentStats};
use oodsim::ood;
use oodsim::runlog::to_csv_string;
use oodsim::sim::{self, ObstacleKind, ScenarioConfig};
use oodsim::vision::{self, encoder_input, Image, VisionParams};

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn image(data: &[u8], width: usize, height: usize, channels: usize) -> PyResult<Image> {
    Image::new(width, height, channels, data.to_vec()).map_err(err)
}

#[pyfunction]
fn kl_per_dim(mu: Vec<f32>, logvar: Vec<f32>) -> PyResult<Vec<f64>> {
    ood::kl_per_dim(&LatentStats { mu, logvar }).map_err(err)
}

#[pyfunction]
fn ood_score(kl: Vec<f64>, subset: Vec<usize>) -> PyResult<f64> {
    ood::ood_score(&kl, &subset).map_err(err)
}

#[pyfunction]
fn select_detectors(calibration_kl: Vec<Vec<f64>>, k: usize) -> PyResult<Vec<usize>> {
    ood::select_detectors(&calibration_kl, k).map_err(err)
}

#[pyfunction]
fn nearest_rank(q: f64, n: usize) -> usize {
    ood::nearest_rank(q, n)
}

#[pyfunction]
fn calibrate_threshold(scores: Vec<f64>, q: f64) -> PyResult<f64> {
    ood::calibrate_threshold(&scores, q).map_err(err)
}

/// Raw (unsmoothed) steering for one 640x480 RGB frame:
/// `(angle_deg, confidence)`.
#[pyfunction]
fn estimate_steering(data: &[u8], width: usize, height: usize) -> PyResult<(f64, String)> {
    let img = image(data, width, height, 3)?;
    let trace = vision::estimate_steering(&img, &VisionParams::default()).map_err(err)?;
    Ok((
        trace.estimate.angle_deg,
        format!("{:?}", trace.estimate.confidence),
    ))
}

fn stats_dict<'py>(py: Python<'py>, s: &StoppingStats) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("runs", s.runs)?;
    d.set_item("collisions", s.collisions)?;
    d.set_item("median", s.median)?;
    d.set_item("ci95_low", s.ci95_low)?;
    d.set_item("ci95_high", s.ci95_high)?;
    d.set_item("success_rate", s.success_rate)?;
    Ok(d)
}

/// Median stopping distance with its 95% order-statistic interval.
/// Zero distances count as collisions.
#[pyfunction]
fn stopping_stats<'py>(py: Python<'py>, distances: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
    stats_dict(py, &analysis::stopping_stats(&distances).map_err(err)?)
}

#[pyclass(name = "Model", frozen)]
struct PyModel(oodsim::nn::Model);

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        load_weights(&path).map(Self).map_err(err)
    }

    /// Default encoder architecture with seeded random weights.
    #[staticmethod]
    #[pyo3(signature = (seed, latent_dim = 30))]
    fn random(seed: u64, latent_dim: usize) -> PyResult<Self> {
        let spec = EncoderSpec {
            latent_dim,
            ..EncoderSpec::default()
        };
        spec.build_random(seed).map(Self).map_err(err)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_weights(&self.0, &path).map_err(err)
    }

    #[getter]
    fn latent_dim(&self) -> usize {
        self.0.latent_dim()
    }

    /// `(mu, logvar)` for a camera frame or an already cropped 128x48 RGB image.
    fn encode(&self, data: &[u8], width: usize, height: usize) -> PyResult<(Vec<f32>, Vec<f32>)> {
        let input = encoder_input(&image(data, width, height, 3)?).map_err(err)?;
        let stats = self.0.encode(&input).map_err(err)?;
        Ok((stats.mu, stats.logvar))
    }

    /// Per-dimension KL divergence for one image.
    fn kl(&self, data: &[u8], width: usize, height: usize) -> PyResult<Vec<f64>> {
        let (mu, logvar) = self.encode(data, width, height)?;
        kl_per_dim(mu, logvar)
    }
}

#[pyclass(name = "RunLog", frozen)]
struct PyRunLog(sim::RunLog);

#[pymethods]
impl PyRunLog {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        sim::RunLog::from_json(text).map(Self).map_err(err)
    }

    fn to_json(&self) -> String {
        self.0.to_json()
    }

    /// Stage events as `seq,topic,stage,timestamp_ns` CSV.
    fn hop_csv(&self) -> String {
        to_csv_string(&self.0.hops)
    }

    #[getter]
    fn end_reason(&self) -> String {
        format!("{:?}", self.0.outcome.end_reason)
    }

    #[getter]
    fn stopping_distance(&self) -> Option<f64> {
        self.0.outcome.stopping_distance
    }

    #[getter]
    fn collision(&self) -> bool {
        self.0.outcome.collision
    }

    #[getter]
    fn frames_scored(&self) -> usize {
        self.0.outcome.frames_scored
    }

    #[getter]
    fn threshold(&self) -> f64 {
        self.0.detector.threshold
    }

    /// `(seq, capture position, score)` for every scored frame.
    #[getter]
    fn scores(&self) -> Vec<(u64, Option<f64>, f64)> {
        self.0
            .ood
            .iter()
            .map(|r| (r.seq, self.0.frame(r.seq).map(|f| f.x), r.score))
            .collect()
    }

    fn __repr__(&self) -> String {
        let o = &self.0.outcome;
        format!(
            "RunLog(end_reason={:?}, stopping_distance={:?}, frames_scored={})",
            o.end_reason, o.stopping_distance, o.frames_scored
        )
    }
}

#[pyclass(name = "Scenario", frozen)]
struct PyScenario(ScenarioConfig);

#[pymethods]
impl PyScenario {
    /// Builds a scenario from TOML text; defaults when `toml` is omitted.
    #[new]
    #[pyo3(signature = (toml = None))]
    fn new(toml: Option<&str>) -> PyResult<Self> {
        match toml {
            Some(t) => ScenarioConfig::from_toml_str(t).map(Self).map_err(err),
            None => Ok(Self(ScenarioConfig::default())),
        }
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        ScenarioConfig::load(&path).map(Self).map_err(err)
    }

    fn to_toml(&self) -> String {
        self.0.to_toml_string()
    }

    /// A copy with a different seed and/or obstacle kind.
    #[pyo3(signature = (seed = None, obstacle = None))]
    fn replace(&self, seed: Option<u64>, obstacle: Option<&str>) -> PyResult<Self> {
        let mut cfg = self.0.clone();
        if let Some(s) = seed {
            cfg.seed = s;
        }
        if let Some(o) = obstacle {
            cfg.obstacle = ObstacleKind::parse(o).map_err(err)?;
        }
        cfg.validate().map_err(err)?;
        Ok(Self(cfg))
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.0.seed
    }

    #[getter]
    fn obstacle(&self) -> &'static str {
        self.0.obstacle.as_str()
    }

    #[getter]
    fn obstacle_distance(&self) -> f64 {
        self.0.obstacle_distance
    }

    #[getter]
    fn risk_zone(&self) -> f64 {
        self.0.risk_zone
    }

    #[getter]
    fn speed(&self) -> f64 {
        self.0.speed
    }

    /// The 640x480 RGB camera frame at `vehicle_x`, as interleaved bytes.
    fn render<'py>(&self, py: Python<'py>, vehicle_x: f64) -> PyResult<Bound<'py, PyBytes>> {
        let img = sim::render_frame(&self.0, vehicle_x).map_err(err)?;
        Ok(PyBytes::new(py, img.data()))
    }

    fn oracle_score(&self, vehicle_x: f64) -> f64 {
        sim::oracle_score(&self.0, vehicle_x)
    }

    fn run(&self, py: Python<'_>) -> PyResult<PyRunLog> {
        let cfg = self.0.clone();
        py.detach(move || sim::run_scenario(&cfg))
            .map(PyRunLog)
            .map_err(err)
    }
}

#[pyfunction]
#[pyo3(signature = (scenario, runs, obstacles = None))]
fn run_campaign(
    py: Python<'_>,
    scenario: &PyScenario,
    runs: usize,
    obstacles: Option<Vec<String>>,
) -> PyResult<Vec<PyRunLog>> {
    let kinds = match obstacles {
        Some(names) => names
            .iter()
            .map(|n| ObstacleKind::parse(n))
            .collect::<Result<Vec<_>, _>>()
            .map_err(err)?,
        None => ObstacleKind::OBSTACLES.to_vec(),
    };
    let cfg = scenario.0.clone();
    let logs = py
        .detach(move || sim::run_campaign(&cfg, runs, &kinds))
        .map_err(err)?;
    Ok(logs.into_iter().map(PyRunLog).collect())
}

/// One dict per threshold with the projected distance of every run.
#[pyfunction]
fn threshold_sweep<'py>(
    py: Python<'py>,
    logs: Vec<PyRef<'py, PyRunLog>>,
    thresholds: Vec<f64>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let logs: Vec<sim::RunLog> = logs.iter().map(|l| l.0.clone()).collect();
    let result = analysis::threshold_sweep(&logs, &thresholds).map_err(err)?;
    result
        .rows
        .iter()
        .map(|row| {
            let d = PyDict::new(py);
            d.set_item("threshold", row.threshold)?;
            d.set_item("collisions", row.collisions)?;
            d.set_item("early_triggers", row.early_triggers)?;
            d.set_item("median_distance", row.median_distance)?;
            d.set_item("distances", row.distances())?;
            Ok(d)
        })
        .collect()
}

#[pyfunction]
fn campaign_stats<'py>(
    py: Python<'py>,
    logs: Vec<PyRef<'py, PyRunLog>>,
) -> PyResult<Bound<'py, PyDict>> {
    let logs: Vec<sim::RunLog> = logs.iter().map(|l| l.0.clone()).collect();
    stats_dict(py, &analysis::stopping_stats_from_logs(&logs).map_err(err)?)
}

#[pymodule]
#[pyo3(name = "oodsim")]
fn oodsim_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(kl_per_dim, m)?)?;
    m.add_function(wrap_pyfunction!(ood_score, m)?)?;
    m.add_function(wrap_pyfunction!(select_detectors, m)?)?;
    m.add_function(wrap_pyfunction!(nearest_rank, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_steering, m)?)?;
    m.add_function(wrap_pyfunction!(stopping_stats, m)?)?;
    m.add_function(wrap_pyfunction!(run_campaign, m)?)?;
    m.add_function(wrap_pyfunction!(threshold_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(campaign_stats, m)?)?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyRunLog>()?;
    m.add_class::<PyScenario>()?;
    Ok(())
}
