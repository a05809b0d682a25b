//! Run configuration and its canonical key-value form.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::compute::{BaseTime, ComputeModel};
use super::EngineError;
use crate::pathsearch::AcceptRule;
use crate::problems::{self, LogisticSpec, Problem, DEFAULT_LAMBDA};
use crate::topology::{self, Topology};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    Aau,
    Sync,
    AsyncPairwise,
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "aau" => Ok(Algorithm::Aau),
            "sync" => Ok(Algorithm::Sync),
            "async-pairwise" => Ok(Algorithm::AsyncPairwise),
            other => Err(format!("unknown algorithm {other:?} (expected aau, sync or async-pairwise)")),
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Aau => "aau",
            Algorithm::Sync => "sync",
            Algorithm::AsyncPairwise => "async-pairwise",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TopologySpec {
    Random { edge_prob: f64 },
    Complete,
    Ring,
    Path,
    File(PathBuf),
    Explicit(Topology),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProblemSpec {
    /// Centers drawn as a shared Gaussian offset plus `spread`-scaled noise.
    Quadratic { dim: usize, spread: f64, noise_sigma: f64 },
    QuadraticCenters { centers: Vec<Vec<f64>>, noise_sigma: f64 },
    Logistic {
        samples_per_worker: usize,
        features: usize,
        classes: usize,
        classes_per_worker: usize,
        non_iid: bool,
        lambda: f64,
        class_sep: f64,
    },
}

impl ProblemSpec {
    pub fn logistic(samples_per_worker: usize, features: usize, classes: usize, non_iid: bool) -> Self {
        ProblemSpec::Logistic {
            samples_per_worker,
            features,
            classes,
            classes_per_worker: (classes / 2).max(1),
            non_iid,
            lambda: DEFAULT_LAMBDA,
            class_sep: 1.0,
        }
    }
}

/// Learning-rate schedule indexed by the virtual iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EtaSchedule {
    Constant(f64),
    /// `sqrt(N / K)` with `K` the iteration budget.
    Corollary,
    /// `eta0 · delta^k`
    Geometric { eta0: f64, delta: f64 },
}

impl Default for EtaSchedule {
    fn default() -> Self {
        EtaSchedule::Geometric { eta0: 0.1, delta: 0.95 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitMode {
    Zeros,
    Gaussian { std: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub n_workers: usize,
    pub topology: TopologySpec,
    pub problem: ProblemSpec,
    pub compute: ComputeModel,
    /// Fixed delay added after every exchange, in simulated seconds.
    pub latency: f64,
    pub batch_size: usize,
    pub eta: EtaSchedule,
    pub k_budget: Option<usize>,
    pub time_budget: Option<f64>,
    pub seed: u64,
    pub pathsearch_rule: AcceptRule,
    pub init: InitMode,
    /// Loss threshold used for the time-to-target summary entry.
    pub loss_target: Option<f64>,
    /// Keep every consensus matrix in the output (memory grows as `K N²`).
    pub trace_matrices: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            algorithm: Algorithm::Aau,
            n_workers: 8,
            topology: TopologySpec::Random { edge_prob: 0.3 },
            problem: ProblemSpec::Quadratic {
                dim: 10,
                spread: 1.0,
                noise_sigma: 0.0,
            },
            compute: ComputeModel::default(),
            latency: 0.0,
            batch_size: 128,
            eta: EtaSchedule::default(),
            k_budget: Some(1000),
            time_budget: None,
            seed: 1,
            pathsearch_rule: AcceptRule::Component,
            init: InitMode::Zeros,
            loss_target: None,
            trace_matrices: false,
        }
    }
}

const TOPOLOGY_STREAM: u64 = 0x746f_706f;
const PROBLEM_STREAM: u64 = 0x7072_6f62;
const INIT_STREAM: u64 = 0x696e_6974;

/// Independent generator for one `(purpose, index)` pair under a run seed.
pub fn stream(seed: u64, purpose: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(purpose.wrapping_mul(0x1_0000_0000).wrapping_add(index));
    rng
}

fn derived_seed(seed: u64, purpose: u64) -> u64 {
    use rand::RngCore;
    stream(seed, purpose, u64::MAX).next_u64()
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |key: &'static str, msg: String| Err(EngineError::Config { key, msg });
        if self.n_workers < 2 {
            return bad("workers", format!("need at least 2 workers, got {}", self.n_workers));
        }
        if self.k_budget.is_none() && self.time_budget.is_none() {
            return bad("k_budget", "at least one of k_budget and time_budget must be set".into());
        }
        if self.k_budget == Some(0) {
            return bad("k_budget", "must be positive".into());
        }
        if let Some(t) = self.time_budget {
            if !(t > 0.0) {
                return bad("time_budget", format!("{t} must be positive"));
            }
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be at least 1".into());
        }
        if !(self.latency >= 0.0 && self.latency.is_finite()) {
            return bad("latency", format!("{} must be non-negative", self.latency));
        }
        if let Err(msg) = self.compute.validate() {
            let key = if msg.starts_with("straggler_prob") {
                "straggler_prob"
            } else if msg.starts_with("slowdown") {
                "slowdown"
            } else {
                "compute"
            };
            return bad(key, msg);
        }
        match self.eta {
            EtaSchedule::Constant(e) if !(e > 0.0 && e.is_finite()) => return bad("eta", format!("{e} must be positive")),
            EtaSchedule::Corollary if self.k_budget.is_none() => {
                return bad("eta_schedule", "corollary schedule needs k_budget".into())
            }
            EtaSchedule::Geometric { eta0, delta } if !(eta0 > 0.0 && delta > 0.0 && delta <= 1.0) => {
                return bad("eta0", format!("geometric schedule needs eta0 > 0 and delta in (0, 1], got {eta0}, {delta}"))
            }
            _ => {}
        }
        if let TopologySpec::Random { edge_prob } = self.topology {
            if !(0.0..=1.0).contains(&edge_prob) {
                return bad("edge_prob", format!("{edge_prob} outside [0, 1]"));
            }
        }
        if let InitMode::Gaussian { std } = self.init {
            if !(std >= 0.0 && std.is_finite()) {
                return bad("init_std", format!("{std} must be non-negative"));
            }
        }
        Ok(())
    }

    /// Learning rate at virtual iteration `k`.
    pub fn eta_at(&self, k: usize) -> f64 {
        eta_schedule(&self.eta, self.n_workers, self.k_budget.unwrap_or(1), k)
    }

    pub fn build_topology(&self) -> Result<Topology, EngineError> {
        let n = self.n_workers;
        let topo = match &self.topology {
            TopologySpec::Random { edge_prob } => {
                topology::random_connected_graph(n, *edge_prob, derived_seed(self.seed, TOPOLOGY_STREAM))?
            }
            TopologySpec::Complete => Topology::complete(n)?,
            TopologySpec::Ring => Topology::ring(n)?,
            TopologySpec::Path => Topology::path(n)?,
            TopologySpec::File(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| EngineError::Config {
                    key: "topology",
                    msg: format!("cannot read {}: {e}", path.display()),
                })?;
                text.parse::<Topology>()?
            }
            TopologySpec::Explicit(t) => t.clone(),
        };
        if topo.n_workers() != n {
            return Err(EngineError::Config {
                key: "topology",
                msg: format!("topology has {} workers, config expects {n}", topo.n_workers()),
            });
        }
        Ok(topo)
    }

    pub fn build_problem(&self) -> Result<Problem, EngineError> {
        let seed = derived_seed(self.seed, PROBLEM_STREAM);
        let p = match &self.problem {
            ProblemSpec::Quadratic { dim, spread, noise_sigma } => {
                problems::random_quadratic(self.n_workers, *dim, *spread, *noise_sigma, seed)?
            }
            ProblemSpec::QuadraticCenters { centers, noise_sigma } => {
                if centers.len() != self.n_workers {
                    return Err(EngineError::Config {
                        key: "problem",
                        msg: format!("{} centers for {} workers", centers.len(), self.n_workers),
                    });
                }
                problems::quadratic_problem(centers.clone(), *noise_sigma)?
            }
            &ProblemSpec::Logistic {
                samples_per_worker,
                features,
                classes,
                classes_per_worker,
                non_iid,
                lambda,
                class_sep,
            } => problems::logistic_from_spec(&LogisticSpec {
                n_workers: self.n_workers,
                samples_per_worker,
                features,
                classes,
                non_iid,
                classes_per_worker,
                lambda,
                class_sep,
                seed,
            })?,
        };
        Ok(p)
    }

    pub fn initial_params(&self, dim: usize) -> Vec<Vec<f64>> {
        match self.init {
            InitMode::Zeros => vec![vec![0.0; dim]; self.n_workers],
            InitMode::Gaussian { std } => {
                use rand::Rng;
                let mut rng = stream(self.seed, INIT_STREAM, 0);
                (0..self.n_workers)
                    .map(|_| {
                        (0..dim)
                            .map(|_| std * rng.sample::<f64, _>(rand_distr::StandardNormal))
                            .collect()
                    })
                    .collect()
            }
        }
    }

    /// Canonical `key = value` listing; also a valid config file.
    pub fn to_kv(&self) -> Vec<(String, String)> {
        let mut kv: Vec<(String, String)> = Vec::new();
        let mut put = |k: &str, v: String| kv.push((k.to_string(), v));
        put("algorithm", self.algorithm.to_string());
        put("workers", self.n_workers.to_string());
        put("seed", self.seed.to_string());
        match &self.topology {
            TopologySpec::Random { edge_prob } => {
                put("topology", "random".into());
                put("edge_prob", format!("{edge_prob:?}"));
            }
            TopologySpec::Complete => put("topology", "complete".into()),
            TopologySpec::Ring => put("topology", "ring".into()),
            TopologySpec::Path => put("topology", "path".into()),
            TopologySpec::File(p) => put("topology", format!("file:{}", p.display())),
            TopologySpec::Explicit(t) => put("topology", format!("edges:{}", t.to_edge_list().replace('\n', ";"))),
        }
        match &self.problem {
            ProblemSpec::Quadratic { dim, spread, noise_sigma } => {
                put("problem", "quadratic".into());
                put("dim", dim.to_string());
                put("center_spread", format!("{spread:?}"));
                put("noise_sigma", format!("{noise_sigma:?}"));
            }
            ProblemSpec::QuadraticCenters { centers, noise_sigma } => {
                let text: Vec<String> = centers
                    .iter()
                    .map(|c| c.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(" "))
                    .collect();
                put("problem", format!("centers:{}", text.join(";")));
                put("noise_sigma", format!("{noise_sigma:?}"));
            }
            ProblemSpec::Logistic {
                samples_per_worker,
                features,
                classes,
                classes_per_worker,
                non_iid,
                lambda,
                class_sep,
            } => {
                put("problem", "logistic".into());
                put("dim", features.to_string());
                put("samples_per_worker", samples_per_worker.to_string());
                put("classes", classes.to_string());
                put("classes_per_worker", classes_per_worker.to_string());
                put("non_iid", non_iid.to_string());
                put("lambda", format!("{lambda:?}"));
                put("class_sep", format!("{class_sep:?}"));
            }
        }
        match &self.compute.base {
            BaseTime::Constant(c) => {
                put("compute", "constant".into());
                put("compute_mean", format!("{c:?}"));
            }
            BaseTime::Uniform { lo, hi } => {
                put("compute", "uniform".into());
                put("compute_lo", format!("{lo:?}"));
                put("compute_hi", format!("{hi:?}"));
            }
            BaseTime::Exponential { mean } => {
                put("compute", "exponential".into());
                put("compute_mean", format!("{mean:?}"));
            }
            BaseTime::Scripted(s) => {
                let text: Vec<String> = s
                    .iter()
                    .map(|w| w.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(" "))
                    .collect();
                put("compute", format!("scripted:{}", text.join(";")));
            }
        }
        put("straggler_prob", format!("{:?}", self.compute.straggler_prob));
        put("slowdown", format!("{:?}", self.compute.slowdown));
        if !self.compute.permanent_stragglers.is_empty() {
            let ids: Vec<String> = self.compute.permanent_stragglers.iter().map(ToString::to_string).collect();
            put("permanent_stragglers", ids.join(","));
        }
        put("latency", format!("{:?}", self.latency));
        put("batch_size", self.batch_size.to_string());
        match self.eta {
            EtaSchedule::Constant(e) => {
                put("eta_schedule", "constant".into());
                put("eta", format!("{e:?}"));
            }
            EtaSchedule::Corollary => put("eta_schedule", "corollary".into()),
            EtaSchedule::Geometric { eta0, delta } => {
                put("eta_schedule", "geometric".into());
                put("eta0", format!("{eta0:?}"));
                put("delta", format!("{delta:?}"));
            }
        }
        put("k_budget", self.k_budget.map(|k| k.to_string()).unwrap_or_default());
        put("time_budget", self.time_budget.map(|t| format!("{t:?}")).unwrap_or_default());
        put("pathsearch_rule", self.pathsearch_rule.to_string());
        match self.init {
            InitMode::Zeros => put("init", "zeros".into()),
            InitMode::Gaussian { std } => {
                put("init", "gaussian".into());
                put("init_std", format!("{std:?}"));
            }
        }
        put("loss_target", self.loss_target.map(|t| format!("{t:?}")).unwrap_or_default());
        put("trace_matrices", self.trace_matrices.to_string());
        kv
    }

    pub fn canonical_text(&self) -> String {
        self.to_kv()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// First 12 hex digits of the SHA-256 of the canonical text.
    pub fn config_hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_text().as_bytes());
        hex::encode(&digest[..6])
    }
}

/// Learning rate for iteration `k` given the worker count and budget.
pub fn eta_schedule(schedule: &EtaSchedule, n_workers: usize, k_budget: usize, k: usize) -> f64 {
    match *schedule {
        EtaSchedule::Constant(e) => e,
        EtaSchedule::Corollary => (n_workers as f64 / k_budget.max(1) as f64).sqrt(),
        EtaSchedule::Geometric { eta0, delta } => eta0 * delta.powi(k.min(i32::MAX as usize) as i32),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedules() {
        let geo = EtaSchedule::default();
        assert_eq!(eta_schedule(&geo, 4, 10, 0), 0.1);
        assert!((eta_schedule(&geo, 4, 10, 2) - 0.09025).abs() < 1e-15);
        assert!((eta_schedule(&EtaSchedule::Corollary, 4, 400, 17) - 0.1).abs() < 1e-15);
        assert_eq!(eta_schedule(&EtaSchedule::Constant(0.3), 4, 400, 17), 0.3);
    }

    #[test]
    fn validation_names_offending_key() {
        let mut c = RunConfig::default();
        c.compute.straggler_prob = 1.5;
        match c.validate() {
            Err(EngineError::Config { key, .. }) => assert_eq!(key, "straggler_prob"),
            other => panic!("unexpected {other:?}"),
        }
        let c = RunConfig {
            n_workers: 1,
            ..RunConfig::default()
        };
        assert!(matches!(c.validate(), Err(EngineError::Config { key: "workers", .. })));
        let c = RunConfig {
            k_budget: None,
            time_budget: None,
            ..RunConfig::default()
        };
        assert!(matches!(c.validate(), Err(EngineError::Config { key: "k_budget", .. })));
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let b = RunConfig { seed: 2, ..a.clone() };
        assert_eq!(a.config_hash(), a.clone().config_hash());
        assert_ne!(a.config_hash(), b.config_hash());
        assert_eq!(a.config_hash().len(), 12);
    }

    #[test]
    fn streams_are_independent_and_reproducible() {
        use rand::RngCore;
        let a = stream(7, 1, 0).next_u64();
        assert_eq!(a, stream(7, 1, 0).next_u64());
        assert_ne!(a, stream(7, 1, 1).next_u64());
        assert_ne!(a, stream(7, 2, 0).next_u64());
    }
}
