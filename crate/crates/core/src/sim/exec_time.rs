use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};

use super::config::ExecTimeModel;
use super::SimError;

/// Seeded source of detector execution times (seconds).
#[derive(Debug, Clone)]
pub struct ExecTimeSampler {
    model: ExecTimeModel,
    lognormal: Option<LogNormal<f64>>,
    rng: ChaCha8Rng,
    cursor: usize,
}

impl ExecTimeSampler {
    pub fn new(model: ExecTimeModel, seed: u64) -> Result<Self, SimError> {
        model.validate()?;
        let lognormal = match model {
            ExecTimeModel::LogNormal { median, sigma } => Some(
                LogNormal::new(median.ln(), sigma)
                    .map_err(|e| SimError::Config(format!("lognormal: {e}")))?,
            ),
            _ => None,
        };
        Ok(Self {
            model,
            lognormal,
            rng: ChaCha8Rng::seed_from_u64(seed),
            cursor: 0,
        })
    }

    pub fn model(&self) -> &ExecTimeModel {
        &self.model
    }

    pub fn sample(&mut self) -> f64 {
        match &self.model {
            ExecTimeModel::Constant { seconds } => *seconds,
            ExecTimeModel::LogNormal { .. } => {
                let d = self.lognormal.as_ref().expect("built in new");
                // Zero is only reachable through underflow; resample.
                loop {
                    let v = d.sample(&mut self.rng);
                    if v > 0.0 {
                        return v;
                    }
                }
            }
            ExecTimeModel::Empirical { samples } => {
                let v = samples[self.cursor % samples.len()];
                self.cursor += 1;
                v
            }
        }
    }
}

/// One draw from a freshly seeded sampler.
pub fn sample_exec_time(model: &ExecTimeModel, seed: u64) -> Result<f64, SimError> {
    Ok(ExecTimeSampler::new(model.clone(), seed)?.sample())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_and_empirical() {
        assert_eq!(
            sample_exec_time(&ExecTimeModel::Constant { seconds: 0.3 }, 1).unwrap(),
            0.3
        );
        let mut s = ExecTimeSampler::new(
            ExecTimeModel::Empirical {
                samples: vec![1.328, 1.202],
            },
            0,
        )
        .unwrap();
        let got: Vec<f64> = (0..5).map(|_| s.sample()).collect();
        assert_eq!(got, vec![1.328, 1.202, 1.328, 1.202, 1.328]);
    }

    #[test]
    fn lognormal_reproducible() {
        let m = ExecTimeModel::default();
        let mut a = ExecTimeSampler::new(m.clone(), 3).unwrap();
        let mut b = ExecTimeSampler::new(m, 3).unwrap();
        for _ in 0..100 {
            let v = a.sample();
            assert!(v > 0.0);
            assert_eq!(v, b.sample());
        }
    }
}
