//! Synchronous DSGD with a global barrier after every round.

use super::{finish, local_sgd_step, record, setup, within_budget, within_time, Algorithm, Counters, EngineError, RunConfig, Setup};
use crate::consensus::metropolis_for_edges;
use crate::metrics::MetricsSeries;
use crate::topology::Edge;

/// Every round all workers compute a gradient at their current parameters;
/// the round ends when the slowest one finishes. Then
/// `w_j ← Σ_i P_ij w_i − η g_j` with the Metropolis matrix of the full graph.
pub fn run_sync_dsgd(config: &RunConfig) -> Result<MetricsSeries, EngineError> {
    let Setup {
        topology,
        problem,
        mut workers,
        mut series,
    } = setup(config, Algorithm::Sync)?;
    let n = config.n_workers;
    let edges: Vec<Edge> = topology.edges().iter().copied().collect();
    let matrix = metropolis_for_edges(n, &edges)?;
    let mut counters = Counters::default();
    let mut now = 0.0;
    let mut k = 0;
    record(&mut series, &problem, &workers, 0, 0.0, config.eta_at(0), 0, counters, 0);

    while within_budget(config, k) {
        let barrier = workers
            .iter_mut()
            .map(|w| w.start_computation(now, &config.compute))
            .fold(now, f64::max);
        if !within_time(config, barrier) {
            break;
        }
        for w in workers.iter_mut() {
            w.finish_computation(&problem, config.batch_size)?;
        }
        let eta = config.eta_at(k);
        let mut next = Vec::with_capacity(n);
        for j in 0..n {
            let mut mixed = vec![0.0; problem.dim()];
            for (i, w) in workers.iter().enumerate() {
                let p = matrix.get(i, j);
                if p != 0.0 {
                    for (acc, v) in mixed.iter_mut().zip(&w.params) {
                        *acc += p * v;
                    }
                }
            }
            let g = workers[j].gradient.as_ref().ok_or(EngineError::MissingGradient(j))?;
            next.push(local_sgd_step(&mixed, g, eta));
        }
        for (w, params) in workers.iter_mut().zip(next) {
            w.params = params;
            w.gradient = None;
            w.snapshot = None;
            w.local_updates += 1;
        }
        for p in series.participations.iter_mut() {
            *p += 1;
        }
        k += 1;
        counters.messages += n as u64;
        if config.trace_matrices {
            series.consensus_matrices.push(matrix.clone());
        }
        record(&mut series, &problem, &workers, k, barrier, eta, n, counters, 0);
        now = barrier + config.latency;
    }
    finish(&mut series, &problem, &workers);
    Ok(series)
}
