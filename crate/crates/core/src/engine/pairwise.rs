//! Asynchronous randomized pairwise gossip.

use rand::seq::IndexedRandom;

use super::{finish, local_sgd_step, record, setup, within_budget, within_time, Algorithm, Counters, EngineError, EventQueue, RunConfig, Setup};
use crate::consensus::metropolis_for_edges;
use crate::metrics::MetricsSeries;
use crate::topology::Edge;

/// A worker that finishes applies its (possibly stale) gradient to its current
/// parameters, then averages half and half with one uniformly chosen
/// neighbor. The neighbor keeps computing. One exchange is one iteration.
pub fn run_async_pairwise(config: &RunConfig) -> Result<MetricsSeries, EngineError> {
    let Setup {
        topology,
        problem,
        mut workers,
        mut series,
    } = setup(config, Algorithm::AsyncPairwise)?;
    let n = config.n_workers;
    let mut queue = EventQueue::new();
    for w in workers.iter_mut() {
        let t = w.start_computation(0.0, &config.compute);
        queue.push(t, w.id);
    }
    let mut counters = Counters::default();
    let mut k = 0;
    record(&mut series, &problem, &workers, 0, 0.0, config.eta_at(0), 0, counters, 0);

    while within_budget(config, k) {
        let Some(ev) = queue.pop() else { break };
        if !within_time(config, ev.time) {
            break;
        }
        let j = ev.worker;
        workers[j].finish_computation(&problem, config.batch_size)?;
        let eta = config.eta_at(k);
        let g = workers[j].gradient.take().ok_or(EngineError::MissingGradient(j))?;
        let stepped = local_sgd_step(&workers[j].params, &g, eta);
        let nbrs = topology.neighbors(j)?;
        let &i = nbrs.choose(workers[j].peer_rng()).expect("connected topology");
        let avg: Vec<f64> = stepped.iter().zip(&workers[i].params).map(|(a, b)| 0.5 * (a + b)).collect();
        workers[i].params = avg.clone();
        workers[j].params = avg;
        workers[j].snapshot = None;
        workers[j].local_updates += 1;
        series.participations[i] += 1;
        series.participations[j] += 1;
        k += 1;
        counters.messages += 2;
        if config.trace_matrices {
            series.consensus_matrices.push(metropolis_for_edges(n, &[Edge::new(i, j)])?);
        }
        record(&mut series, &problem, &workers, k, ev.time, eta, 2, counters, 0);
        let t = workers[j].start_computation(ev.time + config.latency, &config.compute);
        queue.push(t, j);
    }
    finish(&mut series, &problem, &workers);
    Ok(series)
}
