//! Per-iteration measurements, CSV output and derived evaluation quantities.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;

use thiserror::Error;

use crate::consensus::ConsensusMatrix;
use crate::pathsearch::EpochTraceEntry;
use crate::problems::dist_sq;
use crate::topology::Topology;

/// Header of the per-run CSV.
pub const CSV_HEADER: &str = "k,sim_time_s,eta,loss,grad_norm_sq,consensus_err,active_workers,messages,bytes,epoch";

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("candidate series never reaches target {0}")]
    CandidateUnreachable(f64),
    #[error("reference series never reaches target {0}")]
    ReferenceUnreachable(f64),
    #[error("neither series reaches target {0}")]
    BothUnreachable(f64),
    #[error("reference reaches target {0} at time zero; speedup undefined")]
    Degenerate(f64),
}

/// Snapshot taken right after a commit (or barrier).
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub k: usize,
    pub sim_time: f64,
    pub eta: f64,
    /// `F(w̄)`
    pub loss: f64,
    /// `‖∇F(w̄)‖²`
    pub grad_norm_sq: f64,
    /// `max_j ‖w_j − w̄‖²`
    pub consensus_err: f64,
    /// `(1/N) Σ_j ‖w_j − w̄‖²`
    pub consensus_err_mean: f64,
    /// Workers that took part in this iteration.
    pub active_workers: usize,
    /// Cumulative parameter-vector transmissions.
    pub messages: u64,
    /// Cumulative parameter bytes (`messages · d · 8`).
    pub bytes: u64,
    pub epoch: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunMeta {
    pub algorithm: String,
    pub seed: u64,
    pub config_hash: String,
}

/// Everything one simulation run produces.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsSeries {
    pub meta: RunMeta,
    pub records: Vec<MetricsRecord>,
    /// Committed edges (adaptive runs only).
    pub epoch_trace: Vec<EpochTraceEntry>,
    /// Edges committed in each completed epoch.
    pub epoch_lengths: Vec<usize>,
    /// Path-search ID broadcasts counted for each completed epoch.
    pub pathsearch_messages: Vec<u64>,
    /// Gossip participations per worker.
    pub participations: Vec<u64>,
    pub dim: usize,
    pub final_params: Vec<Vec<f64>>,
    pub holdout_accuracy: Option<f64>,
    /// Consensus matrices in commit order, when tracing is enabled.
    pub consensus_matrices: Vec<ConsensusMatrix>,
}

impl MetricsSeries {
    pub fn new(meta: RunMeta, n_workers: usize, dim: usize) -> Self {
        MetricsSeries {
            meta,
            records: Vec::new(),
            epoch_trace: Vec::new(),
            epoch_lengths: Vec::new(),
            pathsearch_messages: Vec::new(),
            participations: vec![0; n_workers],
            dim,
            final_params: Vec::new(),
            holdout_accuracy: None,
            consensus_matrices: Vec::new(),
        }
    }

    pub fn last(&self) -> Option<&MetricsRecord> {
        self.records.last()
    }

    /// `(1/K) Σ_{k<K} ‖∇F(w̄(k))‖²` over the first `k_total` records.
    pub fn ergodic_grad_norm_sq(&self, k_total: usize) -> f64 {
        let take = k_total.min(self.records.len());
        if take == 0 {
            return f64::NAN;
        }
        self.records[..take].iter().map(|r| r.grad_norm_sq).sum::<f64>() / take as f64
    }

    /// Bytes sent by each worker.
    pub fn bytes_per_worker(&self) -> Vec<u64> {
        self.participations
            .iter()
            .map(|&p| p * self.dim as u64 * 8)
            .collect()
    }

    pub fn realized_b(&self) -> Option<usize> {
        self.epoch_lengths.iter().copied().max()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.records.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{:?},{:?},{:?},{:?},{:?},{},{},{},{}",
                r.k,
                r.sim_time,
                r.eta,
                r.loss,
                r.grad_norm_sq,
                r.consensus_err,
                r.active_workers,
                r.messages,
                r.bytes,
                r.epoch
            );
        }
        out
    }

    /// Two-column `key,value` summary.
    pub fn summary_csv(&self, loss_target: Option<f64>) -> String {
        let mut rows: Vec<(String, String)> = vec![
            ("algorithm".into(), self.meta.algorithm.clone()),
            ("seed".into(), self.meta.seed.to_string()),
            ("config_hash".into(), self.meta.config_hash.clone()),
        ];
        if let Some(r) = self.last() {
            rows.push(("final_k".into(), r.k.to_string()));
            rows.push(("final_sim_time_s".into(), format!("{:?}", r.sim_time)));
            rows.push(("final_loss".into(), format!("{:?}", r.loss)));
            rows.push(("final_grad_norm_sq".into(), format!("{:?}", r.grad_norm_sq)));
            rows.push(("final_consensus_err".into(), format!("{:?}", r.consensus_err)));
            rows.push(("total_messages".into(), r.messages.to_string()));
            rows.push(("total_bytes".into(), r.bytes.to_string()));
        }
        let ttt = loss_target
            .and_then(|t| time_to_target(&self.records, t))
            .map(|t| format!("{t:?}"))
            .unwrap_or_default();
        rows.push(("loss_target".into(), loss_target.map(|t| format!("{t:?}")).unwrap_or_default()));
        rows.push(("time_to_target_s".into(), ttt));
        rows.push((
            "pathsearch_messages".into(),
            self.pathsearch_messages.iter().sum::<u64>().to_string(),
        ));
        rows.push(("epochs".into(), self.epoch_lengths.len().to_string()));
        rows.push(("realized_b_per_epoch".into(), join(&self.epoch_lengths)));
        rows.push(("bytes_per_worker".into(), join(&self.bytes_per_worker())));
        rows.push((
            "holdout_accuracy".into(),
            self.holdout_accuracy.map(|a| format!("{a:?}")).unwrap_or_default(),
        ));
        let mut out = String::from("key,value\n");
        for (k, v) in rows {
            let _ = writeln!(out, "{k},{v}");
        }
        out
    }
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(";")
}

/// Returns `(max_j ‖w_j − w̄‖², mean_j ‖w_j − w̄‖²)`.
pub fn consensus_errors(workers: &[Vec<f64>]) -> (f64, f64) {
    if workers.is_empty() {
        return (0.0, 0.0);
    }
    let avg = crate::problems::mean_vector(workers);
    let dists: Vec<f64> = workers.iter().map(|w| dist_sq(w, &avg)).collect();
    let max = dists.iter().copied().fold(0.0, f64::max);
    (max, dists.iter().sum::<f64>() / dists.len() as f64)
}

/// `max_j ‖w_j − w̄‖²`.
pub fn consensus_error(workers: &[Vec<f64>]) -> f64 {
    consensus_errors(workers).0
}

/// First simulated time at which the loss reaches `target`, interpolating
/// linearly between the bracketing records.
pub fn time_to_target(records: &[MetricsRecord], target: f64) -> Option<f64> {
    let idx = records.iter().position(|r| r.loss <= target)?;
    if idx == 0 {
        return Some(records[0].sim_time);
    }
    let (a, b) = (&records[idx - 1], &records[idx]);
    if a.loss == b.loss {
        return Some(b.sim_time);
    }
    let frac = (a.loss - target) / (a.loss - b.loss);
    Some(a.sim_time + frac * (b.sim_time - a.sim_time))
}

/// Reference time-to-target divided by the candidate's.
pub fn speedup_at_target(candidate: &MetricsSeries, reference: &MetricsSeries, target: f64) -> Result<f64, MetricsError> {
    let a = time_to_target(&candidate.records, target);
    let r = time_to_target(&reference.records, target);
    match (a, r) {
        (None, None) => Err(MetricsError::BothUnreachable(target)),
        (None, Some(_)) => Err(MetricsError::CandidateUnreachable(target)),
        (Some(_), None) => Err(MetricsError::ReferenceUnreachable(target)),
        (Some(a), Some(r)) => {
            if a == 0.0 {
                if r == 0.0 {
                    return Ok(1.0);
                }
                return Err(MetricsError::Degenerate(target));
            }
            Ok(r / a)
        }
    }
}

/// ID broadcasts generated by the committed edges of one epoch under a flood
/// model: both endpoints originate a broadcast and every worker reached
/// relays it exactly once.
pub fn count_pathsearch_messages(epoch_edges: &[EpochTraceEntry], topology: &Topology) -> u64 {
    epoch_edges
        .iter()
        .map(|e| flood_transmissions(e.edge.lo(), topology) + flood_transmissions(e.edge.hi(), topology))
        .sum()
}

fn flood_transmissions(origin: usize, topology: &Topology) -> u64 {
    let mut reached = BTreeSet::from([origin]);
    let mut queue = VecDeque::from([origin]);
    let mut sent = 0;
    while let Some(v) = queue.pop_front() {
        sent += 1;
        for &u in topology.neighbors(v).unwrap_or(&[]) {
            if reached.insert(u) {
                queue.push_back(u);
            }
        }
    }
    sent
}
