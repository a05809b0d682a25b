//! Adaptive asynchronous updates driven by path search.
//!
//! A worker that finishes its gradient joins the waiting pool and stays idle.
//! As soon as it shares an acceptable edge with another waiting neighbor,
//! the connected component of waiting workers around it gossips once, the
//! edge is committed and the virtual iteration counter advances. When the
//! committed edges span all workers the epoch resets and the pool is
//! rescanned in arrival order.

use std::collections::BTreeSet;

use super::{finish, record, setup, within_budget, within_time, Algorithm, Counters, EngineError, EventQueue, RunConfig, Setup, WorkerState};
use crate::consensus::metropolis_for_edges;
use crate::metrics::{count_pathsearch_messages, MetricsSeries};
use crate::pathsearch::{EpochTraceEntry, PathSearchState};
use crate::problems::Problem;
use crate::topology::{Edge, Topology, WorkerId};

struct Sim<'a> {
    config: &'a RunConfig,
    topology: Topology,
    problem: Problem,
    workers: Vec<WorkerState>,
    series: MetricsSeries,
    search: PathSearchState,
    queue: EventQueue,
    waiting: BTreeSet<WorkerId>,
    /// Waiting workers in the order they finished.
    arrival: Vec<WorkerId>,
    k: usize,
    counters: Counters,
    epoch_trace_start: usize,
}

impl Sim<'_> {
    fn start(&mut self, worker: WorkerId, now: f64) {
        let done = self.workers[worker].start_computation(now, &self.config.compute);
        self.queue.push(done, worker);
    }

    /// Forms a group around `finisher` if possible. Returns whether it did.
    fn try_form(&mut self, finisher: WorkerId, now: f64) -> Result<bool, EngineError> {
        let Some((group, edge)) = self.search.group_for_finisher(finisher, &self.waiting, &self.topology) else {
            return Ok(false);
        };
        let group_edges: Vec<Edge> = self
            .topology
            .edges()
            .iter()
            .copied()
            .filter(|e| group.binary_search(&e.lo()).is_ok() && group.binary_search(&e.hi()).is_ok())
            .collect();
        let matrix = metropolis_for_edges(self.config.n_workers, &group_edges)?;
        let eta = self.config.eta_at(self.k);
        super::gossip_commit(&group, &mut self.workers, &matrix, eta)?;
        self.search.commit_edge(edge, &self.topology)?;
        self.k += 1;
        self.counters.messages += group.len() as u64;
        for &j in &group {
            self.series.participations[j] += 1;
            self.waiting.remove(&j);
        }
        self.arrival.retain(|w| !group.contains(w));
        self.series.epoch_trace.push(EpochTraceEntry {
            epoch: self.search.epoch_index(),
            k: self.k,
            edge,
            sim_time: now,
            group: group.clone(),
        });
        if self.config.trace_matrices {
            self.series.consensus_matrices.push(matrix);
        }
        record(
            &mut self.series,
            &self.problem,
            &self.workers,
            self.k,
            now,
            eta,
            group.len(),
            self.counters,
            self.search.epoch_index(),
        );
        let restart = now + self.config.latency;
        for &j in &group {
            self.start(j, restart);
        }
        if self.search.epoch_complete() {
            let trace = &self.series.epoch_trace[self.epoch_trace_start..];
            let msgs = count_pathsearch_messages(trace, &self.topology);
            self.series.pathsearch_messages.push(msgs);
            let length = self.search.reset_epoch()?;
            self.series.epoch_lengths.push(length);
            self.epoch_trace_start = self.series.epoch_trace.len();
        }
        Ok(true)
    }

    /// Retries every waiting worker in arrival order until nothing forms.
    fn rescan(&mut self, now: f64) -> Result<(), EngineError> {
        'scan: loop {
            for w in self.arrival.clone() {
                if !within_budget(self.config, self.k) {
                    return Ok(());
                }
                if self.waiting.contains(&w) && self.try_form(w, now)? {
                    continue 'scan;
                }
            }
            return Ok(());
        }
    }
}

pub fn run_dsgd_aau(config: &RunConfig) -> Result<MetricsSeries, EngineError> {
    let Setup {
        topology,
        problem,
        workers,
        series,
    } = setup(config, Algorithm::Aau)?;
    let n = config.n_workers;
    let mut sim = Sim {
        config,
        topology,
        problem,
        workers,
        series,
        search: PathSearchState::new(n, config.pathsearch_rule),
        queue: EventQueue::new(),
        waiting: BTreeSet::new(),
        arrival: Vec::new(),
        k: 0,
        counters: Counters::default(),
        epoch_trace_start: 0,
    };
    for j in 0..n {
        sim.start(j, 0.0);
    }
    record(&mut sim.series, &sim.problem, &sim.workers, 0, 0.0, config.eta_at(0), 0, sim.counters, 0);

    while within_budget(config, sim.k) {
        let Some(ev) = sim.queue.pop() else {
            let time = sim.series.last().map_or(0.0, |r| r.sim_time);
            return Err(EngineError::Deadlock { k: sim.k, time });
        };
        if !within_time(config, ev.time) {
            break;
        }
        sim.workers[ev.worker].finish_computation(&sim.problem, config.batch_size)?;
        sim.waiting.insert(ev.worker);
        sim.arrival.push(ev.worker);
        let epoch_before = sim.search.epoch_index();
        if sim.try_form(ev.worker, ev.time)? && sim.search.epoch_index() != epoch_before {
            sim.rescan(ev.time)?;
        }
    }

    finish(&mut sim.series, &sim.problem, &sim.workers);
    Ok(sim.series)
}
