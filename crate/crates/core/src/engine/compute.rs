//! Simulated gradient-computation times with random straggler injection.

use rand::Rng;
use rand_distr::{Distribution, Exp, Uniform};

use crate::topology::WorkerId;

/// Distribution of a worker's undisturbed computation time, in simulated seconds.
#[derive(Debug, Clone, PartialEq)]
pub enum BaseTime {
    Constant(f64),
    Uniform { lo: f64, hi: f64 },
    Exponential { mean: f64 },
    /// Per-worker duration scripts; the last entry repeats once a script runs out.
    Scripted(Vec<Vec<f64>>),
}

impl BaseTime {
    pub fn validate(&self) -> Result<(), String> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        match self {
            BaseTime::Constant(c) if !positive(*c) => Err(format!("constant compute time {c} must be positive")),
            BaseTime::Uniform { lo, hi } if !(positive(*lo) && hi >= lo && hi.is_finite()) => {
                Err(format!("uniform compute time bounds ({lo}, {hi}) must satisfy 0 < lo <= hi"))
            }
            BaseTime::Exponential { mean } if !positive(*mean) => Err(format!("exponential mean {mean} must be positive")),
            BaseTime::Scripted(s) if s.iter().any(|w| w.is_empty() || w.iter().any(|&v| !positive(v))) => {
                Err("scripted compute times must be non-empty and positive".into())
            }
            _ => Ok(()),
        }
    }

    pub fn mean(&self) -> Option<f64> {
        match self {
            BaseTime::Constant(c) => Some(*c),
            BaseTime::Uniform { lo, hi } => Some(0.5 * (lo + hi)),
            BaseTime::Exponential { mean } => Some(*mean),
            BaseTime::Scripted(_) => None,
        }
    }
}

/// Compute-time model shared by all workers.
#[derive(Debug, Clone, PartialEq)]
pub struct ComputeModel {
    pub base: BaseTime,
    /// Chance that any single computation is slowed down.
    pub straggler_prob: f64,
    /// Multiplier applied to a straggling computation.
    pub slowdown: f64,
    /// Workers slowed down on every computation.
    pub permanent_stragglers: Vec<WorkerId>,
}

impl Default for ComputeModel {
    fn default() -> Self {
        ComputeModel {
            base: BaseTime::Constant(1.0),
            straggler_prob: 0.1,
            slowdown: 10.0,
            permanent_stragglers: Vec::new(),
        }
    }
}

impl ComputeModel {
    pub fn constant(t: f64) -> Self {
        ComputeModel {
            base: BaseTime::Constant(t),
            straggler_prob: 0.0,
            slowdown: 1.0,
            permanent_stragglers: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        self.base.validate()?;
        if !(0.0..=1.0).contains(&self.straggler_prob) {
            return Err(format!("straggler_prob {} outside [0, 1]", self.straggler_prob));
        }
        if !(self.slowdown >= 1.0 && self.slowdown.is_finite()) {
            return Err(format!("slowdown {} must be >= 1", self.slowdown));
        }
        Ok(())
    }
}

/// Draws one computation time. `worker` and `nth` select the script entry in
/// scripted mode. Exactly one uniform draw decides straggling, whatever the
/// probability, so streams stay aligned across configurations.
pub fn sample_compute_time<R: Rng + ?Sized>(model: &ComputeModel, worker: WorkerId, nth: usize, rng: &mut R) -> f64 {
    let base = match &model.base {
        BaseTime::Constant(c) => *c,
        BaseTime::Uniform { lo, hi } => {
            if lo == hi {
                *lo
            } else {
                Uniform::new(*lo, *hi).expect("validated bounds").sample(rng)
            }
        }
        BaseTime::Exponential { mean } => {
            // shift away from zero so durations stay strictly positive
            Exp::new(1.0 / mean).expect("validated mean").sample(rng).max(f64::MIN_POSITIVE)
        }
        BaseTime::Scripted(scripts) => {
            let s = &scripts[worker % scripts.len()];
            s[nth.min(s.len() - 1)]
        }
    };
    let draw: f64 = rng.random();
    let straggles = draw < model.straggler_prob || model.permanent_stragglers.contains(&worker);
    if straggles {
        base * model.slowdown
    } else {
        base
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_without_stragglers() {
        let m = ComputeModel::constant(1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!((0..100).all(|i| sample_compute_time(&m, 0, i, &mut rng) == 1.0));
    }

    #[test]
    fn always_straggling() {
        let m = ComputeModel {
            straggler_prob: 1.0,
            slowdown: 6.0,
            ..ComputeModel::constant(1.0)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!((0..100).all(|i| sample_compute_time(&m, 2, i, &mut rng) == 6.0));
    }

    #[test]
    fn permanent_straggler() {
        let m = ComputeModel {
            slowdown: 10.0,
            permanent_stragglers: vec![1],
            ..ComputeModel::constant(1.0)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(sample_compute_time(&m, 1, 0, &mut rng), 10.0);
        assert_eq!(sample_compute_time(&m, 0, 0, &mut rng), 1.0);
    }

    #[test]
    fn scripts_repeat_last_entry() {
        let m = ComputeModel {
            base: BaseTime::Scripted(vec![vec![2.0, 3.0], vec![1.0]]),
            ..ComputeModel::constant(1.0)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(sample_compute_time(&m, 0, 0, &mut rng), 2.0);
        assert_eq!(sample_compute_time(&m, 0, 5, &mut rng), 3.0);
        assert_eq!(sample_compute_time(&m, 1, 9, &mut rng), 1.0);
    }

    #[test]
    fn validation() {
        assert!(ComputeModel::default().validate().is_ok());
        assert!(ComputeModel { straggler_prob: 1.5, ..Default::default() }.validate().is_err());
        assert!(ComputeModel { slowdown: 0.5, ..Default::default() }.validate().is_err());
        assert!(ComputeModel::constant(0.0).validate().is_err());
        assert!(BaseTime::Uniform { lo: 2.0, hi: 1.0 }.validate().is_err());
    }
}
