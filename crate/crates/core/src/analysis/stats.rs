use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::sim::RunLog;

/// Mean speed from the first commanded motion to the stop command (or to
/// the end of the run when no stop was commanded).
pub fn velocity_estimate(log: &RunLog) -> Result<f64, AnalysisError> {
    let start = log
        .motion
        .iter()
        .find(|m| m.speed > 0.0)
        .ok_or(AnalysisError::NoMotion)?;
    let t_end = log.outcome.estop_ns.unwrap_or(log.outcome.end_ns);
    let distance = log.outcome.x_at_stop - start.x;
    if t_end <= start.t_ns || !(distance > 0.0) {
        return Err(AnalysisError::NoMotion);
    }
    Ok(distance / ((t_end - start.t_ns) as f64 * 1e-9))
}

pub fn median(values: &[f64]) -> Result<f64, AnalysisError> {
    let v = sorted(values)?;
    let n = v.len();
    Ok(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

fn sorted(values: &[f64]) -> Result<Vec<f64>, AnalysisError> {
    if values.is_empty() {
        return Err(AnalysisError::Empty);
    }
    if let Some(&bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(AnalysisError::NonFinite(bad));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// `ln P(B <= k)` terms for `B ~ Binomial(n, 1/2)`, accumulated as a CDF.
fn binomial_half_cdf(n: usize) -> Vec<f64> {
    let ln_half_n = n as f64 * 0.5f64.ln();
    let mut ln_c = 0.0f64;
    let mut acc = 0.0;
    let mut cdf = Vec::with_capacity(n + 1);
    for k in 0..=n {
        if k > 0 {
            ln_c += ((n - k + 1) as f64).ln() - (k as f64).ln();
        }
        acc += (ln_c + ln_half_n).exp();
        cdf.push(acc);
    }
    cdf
}

/// Distribution-free 95% interval for the median: the order statistics
/// `x_(j)` and `x_(n-j+1)` for the largest `j` with `P(B <= j-1) <= 0.025`.
/// Falls back to the sample range when no such `j` exists (n < 6).
pub fn median_ci(values: &[f64]) -> Result<(f64, f64), AnalysisError> {
    let v = sorted(values)?;
    let n = v.len();
    let cdf = binomial_half_cdf(n);
    let j = (1..=n / 2).rev().find(|&j| cdf[j - 1] <= 0.025);
    Ok(match j {
        Some(j) => (v[j - 1], v[n - j]),
        None => (v[0], v[n - 1]),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoppingStats {
    pub runs: usize,
    pub collisions: usize,
    pub median: f64,
    pub ci95_low: f64,
    pub ci95_high: f64,
    pub success_rate: f64,
}

/// Statistics over stopping distances; a distance `<= 0` is a collision.
pub fn stopping_stats(distances: &[f64]) -> Result<StoppingStats, AnalysisError> {
    let (lo, hi) = median_ci(distances)?;
    let collisions = distances.iter().filter(|&&d| d <= 0.0).count();
    Ok(StoppingStats {
        runs: distances.len(),
        collisions,
        median: median(distances)?,
        ci95_low: lo,
        ci95_high: hi,
        success_rate: 1.0 - collisions as f64 / distances.len() as f64,
    })
}

pub fn stopping_stats_from_logs(logs: &[RunLog]) -> Result<StoppingStats, AnalysisError> {
    let distances = logs
        .iter()
        .enumerate()
        .map(|(run, l)| {
            l.outcome
                .stopping_distance
                .ok_or(AnalysisError::NoObstacle { run })
        })
        .collect::<Result<Vec<_>, _>>()?;
    stopping_stats(&distances)
}
