//! Seeded families of exponential degradation traces.

use rand::Rng;
use serde::{Deserialize, Serialize};

use agecast_core::ingest::{synthesize_trace, SynthConfig};
use agecast_core::DegradationTrace;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FamilyConfig {
    pub traces: usize,
    /// Points per trace, one per minute.
    pub len: usize,
    pub alpha: f64,
    /// Each trace draws α uniformly from `alpha · (1 ± alpha_jitter)`.
    pub alpha_jitter: f64,
    /// Shared growth rate per minute.
    pub beta: f64,
    /// Noise standard deviation as a fraction of the trace's final ΔR.
    pub noise_fraction: f64,
}

impl Default for FamilyConfig {
    fn default() -> Self {
        Self { traces: 3, len: 100, alpha: 0.01, alpha_jitter: 0.2, beta: 0.02, noise_fraction: 0.02 }
    }
}

/// Traces `s{seed}-t{k}`, reproducible from `seed`.
pub fn synthetic_family(config: &FamilyConfig, seed: u64) -> Result<Vec<DegradationTrace>> {
    if config.traces == 0 || config.len < 2 {
        return Err(Error::Config("a family needs at least one trace of two points".into()));
    }
    if !(0.0..1.0).contains(&config.alpha_jitter) || !(config.noise_fraction >= 0.0) {
        return Err(Error::Config("alpha_jitter must lie in [0, 1) and noise_fraction be >= 0".into()));
    }
    let mut rng = agecast_core::seeded_rng(seed);
    (0..config.traces)
        .map(|k| {
            let alpha = config.alpha * (1.0 + config.alpha_jitter * rng.random_range(-1.0..=1.0));
            let duration = (config.len - 1) as f64;
            let mut cfg = SynthConfig::new(alpha, config.beta, duration);
            cfg.noise_sigma = config.noise_fraction * cfg.delta_r(duration).abs();
            cfg.seed = rng.random();
            Ok(synthesize_trace(&cfg)?.with_id(format!("s{seed}-t{k}")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproducible_and_distinct() {
        let cfg = FamilyConfig::default();
        let a = synthetic_family(&cfg, 4).unwrap();
        assert_eq!(a, synthetic_family(&cfg, 4).unwrap());
        assert_ne!(a, synthetic_family(&cfg, 5).unwrap());
        assert_eq!(a.len(), 3);
        assert!(a.iter().all(|t| t.len() == 100));
        assert_eq!(a[1].id(), "s4-t1");
    }

    #[test]
    fn noise_free_family_follows_the_model() {
        let cfg = FamilyConfig { noise_fraction: 0.0, alpha_jitter: 0.0, ..Default::default() };
        let f = synthetic_family(&cfg, 0).unwrap();
        let expected = 0.01 * (0.02f64 * 99.0).exp_m1();
        for t in &f {
            assert!((t.values()[99] - expected).abs() < 1e-15);
        }
    }
}
