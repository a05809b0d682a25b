//! Discrete-event simulation of decentralized SGD.
//!
//! Three algorithms share the same workers, compute-time model and metrics:
//! adaptive asynchronous gossip ([`run_dsgd_aau`]), synchronous DSGD with a
//! global barrier ([`run_sync_dsgd`]) and random pairwise asynchronous
//! averaging ([`run_async_pairwise`]). The event loop is single-threaded and
//! every random draw comes from a per-worker seeded stream, so a config
//! fully determines its output.

mod aau;
mod compute;
mod config;
mod events;
mod pairwise;
mod sync;

use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::consensus::{ConsensusError, ConsensusMatrix};
use crate::metrics::{self, MetricsRecord, MetricsSeries, RunMeta};
use crate::pathsearch::PathSearchError;
use crate::problems::{Problem, ProblemError};
use crate::topology::{Topology, TopologyError, WorkerId};

pub use aau::run_dsgd_aau;
pub use compute::{sample_compute_time, BaseTime, ComputeModel};
pub use config::{eta_schedule, stream, Algorithm, EtaSchedule, InitMode, ProblemSpec, RunConfig, TopologySpec};
pub use events::{Event, EventQueue};
pub use pairwise::run_async_pairwise;
pub use sync::run_sync_dsgd;

#[derive(Debug, Error, PartialEq)]
pub enum EngineError {
    #[error("invalid config key `{key}`: {msg}")]
    Config { key: &'static str, msg: String },
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Consensus(#[from] ConsensusError),
    #[error(transparent)]
    PathSearch(#[from] PathSearchError),
    #[error("worker {0} has no gradient ready")]
    MissingGradient(WorkerId),
    #[error("consensus matrix edge {0} leaves the gossip group")]
    MatrixGroupMismatch(crate::topology::Edge),
    #[error("wrong algorithm for this runner: {0}")]
    WrongAlgorithm(Algorithm),
    #[error("no worker can make progress at k={k}, t={time}")]
    Deadlock { k: usize, time: f64 },
}

/// Stream purposes for per-worker randomness.
const COMPUTE_STREAM: u64 = 1;
const GRADIENT_STREAM: u64 = 2;
const PEER_STREAM: u64 = 3;

/// One simulated worker.
#[derive(Debug, Clone)]
pub struct WorkerState {
    pub id: WorkerId,
    pub params: Vec<f64>,
    /// Parameters the in-flight gradient is evaluated at.
    pub snapshot: Option<Vec<f64>>,
    /// Finished gradient awaiting a commit.
    pub gradient: Option<Vec<f64>>,
    pub busy_until: f64,
    /// Computations started so far.
    pub computations: usize,
    pub local_updates: u64,
    compute_rng: ChaCha8Rng,
    gradient_rng: ChaCha8Rng,
    peer_rng: ChaCha8Rng,
}

impl WorkerState {
    pub fn new(id: WorkerId, params: Vec<f64>, seed: u64) -> Self {
        WorkerState {
            id,
            params,
            snapshot: None,
            gradient: None,
            busy_until: 0.0,
            computations: 0,
            local_updates: 0,
            compute_rng: stream(seed, COMPUTE_STREAM, id as u64),
            gradient_rng: stream(seed, GRADIENT_STREAM, id as u64),
            peer_rng: stream(seed, PEER_STREAM, id as u64),
        }
    }

    /// Starts a computation at `now` from the current parameters and returns
    /// its completion time.
    pub fn start_computation(&mut self, now: f64, model: &ComputeModel) -> f64 {
        let duration = sample_compute_time(model, self.id, self.computations, &mut self.compute_rng);
        self.computations += 1;
        self.snapshot = Some(self.params.clone());
        self.gradient = None;
        self.busy_until = self.busy_until.max(now + duration);
        self.busy_until
    }

    /// Evaluates the in-flight gradient at the snapshot.
    pub fn finish_computation(&mut self, problem: &Problem, batch_size: usize) -> Result<(), EngineError> {
        let at = self.snapshot.as_deref().unwrap_or(&self.params);
        let g = problem.stochastic_gradient(self.id, at, batch_size, &mut self.gradient_rng)?;
        self.gradient = Some(g);
        Ok(())
    }

    pub fn peer_rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.peer_rng
    }
}

/// `w − η g`.
pub fn local_sgd_step(w: &[f64], g: &[f64], eta: f64) -> Vec<f64> {
    w.iter().zip(g).map(|(a, b)| a - eta * b).collect()
}

/// Each group member takes a local step from its snapshot with its ready
/// gradient, then every member replaces its parameters with the
/// matrix-weighted average of the stepped vectors:
/// `w_j = Σ_{i ∈ group} w̃_i P_{i,j}`. Non-members are untouched. Members'
/// gradients and snapshots are cleared.
pub fn gossip_commit(
    group: &[WorkerId],
    workers: &mut [WorkerState],
    matrix: &ConsensusMatrix,
    eta: f64,
) -> Result<(), EngineError> {
    for e in matrix.support() {
        if !group.contains(&e.lo()) || !group.contains(&e.hi()) {
            return Err(EngineError::MatrixGroupMismatch(*e));
        }
    }
    let mut stepped = Vec::with_capacity(group.len());
    for &i in group {
        let w = &workers[i];
        let g = w.gradient.as_ref().ok_or(EngineError::MissingGradient(i))?;
        let base = w.snapshot.as_ref().unwrap_or(&w.params);
        stepped.push(local_sgd_step(base, g, eta));
    }
    for &j in group {
        let mut next = vec![0.0; stepped[0].len()];
        for (pos, &i) in group.iter().enumerate() {
            let weight = matrix.get(i, j);
            if weight != 0.0 {
                for (acc, v) in next.iter_mut().zip(&stepped[pos]) {
                    *acc += weight * v;
                }
            }
        }
        let w = &mut workers[j];
        w.params = next;
        w.gradient = None;
        w.snapshot = None;
        w.local_updates += 1;
    }
    Ok(())
}

/// Runs whichever algorithm the config selects.
pub fn run(config: &RunConfig) -> Result<MetricsSeries, EngineError> {
    match config.algorithm {
        Algorithm::Aau => run_dsgd_aau(config),
        Algorithm::Sync => run_sync_dsgd(config),
        Algorithm::AsyncPairwise => run_async_pairwise(config),
    }
}

/// Shared setup for all runners.
struct Setup {
    topology: Topology,
    problem: Problem,
    workers: Vec<WorkerState>,
    series: MetricsSeries,
}

fn setup(config: &RunConfig, expected: Algorithm) -> Result<Setup, EngineError> {
    if config.algorithm != expected {
        return Err(EngineError::WrongAlgorithm(config.algorithm));
    }
    config.validate()?;
    let topology = config.build_topology()?;
    let problem = config.build_problem()?;
    let workers: Vec<WorkerState> = config
        .initial_params(problem.dim())
        .into_iter()
        .enumerate()
        .map(|(id, w)| WorkerState::new(id, w, config.seed))
        .collect();
    let series = MetricsSeries::new(
        RunMeta {
            algorithm: config.algorithm.to_string(),
            seed: config.seed,
            config_hash: config.config_hash(),
        },
        config.n_workers,
        problem.dim(),
    );
    Ok(Setup {
        topology,
        problem,
        workers,
        series,
    })
}

/// Cumulative counters carried between records.
#[derive(Debug, Default, Clone, Copy)]
struct Counters {
    messages: u64,
}

fn record(
    series: &mut MetricsSeries,
    problem: &Problem,
    workers: &[WorkerState],
    k: usize,
    sim_time: f64,
    eta: f64,
    active: usize,
    counters: Counters,
    epoch: usize,
) {
    let params: Vec<Vec<f64>> = workers.iter().map(|w| w.params.clone()).collect();
    let avg = crate::problems::mean_vector(&params);
    let (loss, grad) = problem.global_objective(&avg);
    let (cmax, cmean) = metrics::consensus_errors(&params);
    series.records.push(MetricsRecord {
        k,
        sim_time,
        eta,
        loss,
        grad_norm_sq: crate::problems::norm_sq(&grad),
        consensus_err: cmax,
        consensus_err_mean: cmean,
        active_workers: active,
        messages: counters.messages,
        bytes: counters.messages * problem.dim() as u64 * 8,
        epoch,
    });
}

fn finish(series: &mut MetricsSeries, problem: &Problem, workers: &[WorkerState]) {
    series.final_params = workers.iter().map(|w| w.params.clone()).collect();
    let avg = crate::problems::mean_vector(&series.final_params);
    series.holdout_accuracy = problem.holdout_accuracy(&avg);
}

fn within_budget(config: &RunConfig, k: usize) -> bool {
    config.k_budget.is_none_or(|kb| k < kb)
}

fn within_time(config: &RunConfig, t: f64) -> bool {
    config.time_budget.is_none_or(|tb| t <= tb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consensus::metropolis_for_edges;
    use crate::topology::Edge;

    fn ready(id: WorkerId, w: Vec<f64>, g: Vec<f64>) -> WorkerState {
        let mut s = WorkerState::new(id, w.clone(), 0);
        s.snapshot = Some(w);
        s.gradient = Some(g);
        s
    }

    #[test]
    fn sgd_step() {
        assert_eq!(local_sgd_step(&[1.0, 1.0], &[1.0, 0.0], 0.5), vec![0.5, 1.0]);
        assert_eq!(local_sgd_step(&[1.0, 2.0], &[0.0, 0.0], 0.5), vec![1.0, 2.0]);
        assert_eq!(local_sgd_step(&[1.0, 2.0], &[3.0, 4.0], 0.0), vec![1.0, 2.0]);
    }

    #[test]
    fn pair_average() {
        let mut ws = vec![ready(0, vec![0.0], vec![0.0]), ready(1, vec![2.0], vec![0.0])];
        let m = metropolis_for_edges(2, &[Edge::new(0, 1)]).unwrap();
        gossip_commit(&[0, 1], &mut ws, &m, 0.1).unwrap();
        assert_eq!(ws[0].params, vec![1.0]);
        assert_eq!(ws[1].params, vec![1.0]);
        assert!(ws[0].gradient.is_none() && ws[0].snapshot.is_none());
    }

    #[test]
    fn singleton_is_local_step() {
        let mut ws = vec![ready(0, vec![1.0, 1.0], vec![1.0, 0.0]), ready(1, vec![5.0, 5.0], vec![1.0, 1.0])];
        gossip_commit(&[0], &mut ws, &ConsensusMatrix::identity(2), 0.5).unwrap();
        assert_eq!(ws[0].params, vec![0.5, 1.0]);
        assert_eq!(ws[1].params, vec![5.0, 5.0]);
        assert!(ws[1].gradient.is_some());
    }

    #[test]
    fn path_group_matches_dense_product() {
        let edges = [Edge::new(0, 1), Edge::new(1, 2)];
        let m = metropolis_for_edges(3, &edges).unwrap();
        let ws0 = vec![
            ready(0, vec![1.0, -2.0], vec![0.5, 0.25]),
            ready(1, vec![4.0, 0.0], vec![-1.0, 2.0]),
            ready(2, vec![-3.0, 6.0], vec![0.0, -0.5]),
        ];
        let eta = 0.2;
        // oracle: W_new[:, j] = Σ_i W̃[:, i] P[i][j] written out as a plain loop
        let stepped: Vec<Vec<f64>> = ws0
            .iter()
            .map(|w| {
                let g = w.gradient.as_ref().unwrap();
                vec![w.params[0] - eta * g[0], w.params[1] - eta * g[1]]
            })
            .collect();
        let p = m.matrix();
        let mut expected = vec![vec![0.0; 2]; 3];
        for j in 0..3 {
            for i in 0..3 {
                for c in 0..2 {
                    expected[j][c] += stepped[i][c] * p.get(i, j);
                }
            }
        }
        let mut ws = ws0.clone();
        gossip_commit(&[0, 1, 2], &mut ws, &m, eta).unwrap();
        for j in 0..3 {
            for c in 0..2 {
                assert!((ws[j].params[c] - expected[j][c]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn commit_errors() {
        let mut ws = vec![ready(0, vec![0.0], vec![0.0]), WorkerState::new(1, vec![1.0], 0)];
        let m = metropolis_for_edges(2, &[Edge::new(0, 1)]).unwrap();
        assert_eq!(gossip_commit(&[0, 1], &mut ws, &m, 0.1).unwrap_err(), EngineError::MissingGradient(1));
        assert_eq!(
            gossip_commit(&[0], &mut ws, &m, 0.1).unwrap_err(),
            EngineError::MatrixGroupMismatch(Edge::new(0, 1))
        );
    }
}
