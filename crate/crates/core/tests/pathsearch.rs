use std::collections::BTreeSet;

use dsgd_aau::pathsearch::{AcceptRule, PathSearchState};
use dsgd_aau::topology::{random_connected_graph, Edge, Topology};
use proptest::prelude::*;

/// Component labels of `(V, P)` with unseen vertices as singletons, computed
/// by repeated label merging.
fn labels(n: usize, accepted: &BTreeSet<Edge>) -> Vec<usize> {
    let mut label: Vec<usize> = (0..n).collect();
    loop {
        let mut changed = false;
        for e in accepted {
            let m = label[e.lo()].min(label[e.hi()]);
            for v in [e.lo(), e.hi()] {
                if label[v] != m {
                    label[v] = m;
                    changed = true;
                }
            }
        }
        if !changed {
            return label;
        }
    }
}

fn oracle_acceptable(state: &PathSearchState, g: &Topology) -> Vec<Edge> {
    let label = labels(g.n_workers(), state.accepted_edges());
    g.edges()
        .iter()
        .copied()
        .filter(|e| !state.accepted_edges().contains(e) && label[e.lo()] != label[e.hi()])
        .collect()
}

/// Depth-first enumeration of every commit order; returns every terminal
/// epoch length.
fn all_epoch_lengths(state: &PathSearchState, g: &Topology, out: &mut Vec<usize>) {
    if state.epoch_complete() {
        out.push(state.iterations_this_epoch());
        return;
    }
    let options: Vec<Edge> = g.edges().iter().copied().filter(|&e| state.acceptable_edge(e, g)).collect();
    assert!(!options.is_empty(), "stalled with {:?}", state.accepted_edges());
    for e in options {
        let mut next = state.clone();
        next.commit_edge(e, g).unwrap();
        all_epoch_lengths(&next, g, out);
    }
}

#[test]
fn every_commit_order_on_four_workers_takes_three_edges() {
    let graphs = [
        Topology::complete(4).unwrap(),
        Topology::ring(4).unwrap(),
        Topology::path(4).unwrap(),
        Topology::from_edges(4, [(0, 1), (0, 2), (0, 3)]).unwrap(),
        Topology::from_edges(4, [(0, 1), (1, 2), (2, 0), (2, 3)]).unwrap(),
    ];
    for g in &graphs {
        let mut lengths = Vec::new();
        all_epoch_lengths(&PathSearchState::new(4, AcceptRule::Component), g, &mut lengths);
        assert!(!lengths.is_empty());
        assert!(lengths.iter().all(|&l| l == 3), "{lengths:?}");
    }
}

#[test]
fn merging_two_pairs_separates_the_rules() {
    let g = Topology::complete(4).unwrap();
    let mut component = PathSearchState::new(4, AcceptRule::Component);
    let mut literal = PathSearchState::new(4, AcceptRule::Literal);
    for s in [&mut component, &mut literal] {
        s.commit_edge(Edge::new(0, 1), &g).unwrap();
        s.commit_edge(Edge::new(2, 3), &g).unwrap();
    }
    let bridge = Edge::new(1, 2);
    assert!(component.acceptable_edge(bridge, &g));
    assert!(oracle_acceptable(&component, &g).contains(&bridge));
    // every vertex is seen but the forest is split: nothing is acceptable
    assert!(!literal.epoch_complete());
    assert!(g.edges().iter().all(|&e| !literal.acceptable_edge(e, &g)));
}

proptest! {
    #[test]
    fn random_epochs_build_spanning_trees(n in 2usize..14, p in 0.0f64..=1.0, seed: u64, picks in proptest::collection::vec(any::<u32>(), 64)) {
        let g = random_connected_graph(n, p, seed).unwrap();
        let mut state = PathSearchState::new(n, AcceptRule::Component);
        for epoch in 0..3 {
            let mut steps = 0;
            while !state.epoch_complete() {
                let lib: Vec<Edge> = g.edges().iter().copied().filter(|&e| state.acceptable_edge(e, &g)).collect();
                prop_assert_eq!(&lib, &oracle_acceptable(&state, &g));
                prop_assert!(!lib.is_empty());
                let before = (state.accepted_edges().clone(), state.seen_vertices().clone());
                let e = lib[picks[(steps + 7 * epoch) % picks.len()] as usize % lib.len()];
                state.commit_edge(e, &g).unwrap();
                prop_assert!(state.accepted_edges().is_superset(&before.0));
                prop_assert!(state.seen_vertices().is_superset(&before.1));
                prop_assert!(state.commit_edge(e, &g).is_err());
                steps += 1;
                prop_assert!(steps <= n - 1);
            }
            prop_assert_eq!(state.accepted_edges().len(), n - 1);
            let label = labels(n, state.accepted_edges());
            prop_assert!(label.iter().all(|&l| l == 0));
            prop_assert_eq!(state.reset_epoch().unwrap(), n - 1);
            prop_assert!(state.reset_epoch().is_err());
        }
        prop_assert_eq!(state.realized_b(), Some(n - 1));
    }
}
