use dsgd_aau::engine::{run, ComputeModel, RunConfig, TopologySpec};
use dsgd_aau::metrics::{consensus_error, count_pathsearch_messages};
use dsgd_aau::pathsearch::EpochTraceEntry;
use dsgd_aau::topology::{Edge, Topology};
use proptest::prelude::*;

/// First pass: mean. Second pass: largest squared deviation.
fn two_pass(ws: &[Vec<f64>]) -> f64 {
    let d = ws[0].len();
    let mut mean = vec![0.0; d];
    for w in ws {
        for i in 0..d {
            mean[i] += w[i];
        }
    }
    for m in &mut mean {
        *m /= ws.len() as f64;
    }
    ws.iter()
        .map(|w| (0..d).map(|i| (w[i] - mean[i]).powi(2)).sum::<f64>())
        .fold(0.0, f64::max)
}

fn vectors(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<Vec<f64>>> {
    (n, 1usize..6).prop_flat_map(|(n, d)| proptest::collection::vec(proptest::collection::vec(-100.0f64..100.0, d), n))
}

proptest! {
    #[test]
    fn three_vectors_match_two_pass(ws in vectors(3..4)) {
        let got = consensus_error(&ws);
        let want = two_pass(&ws);
        prop_assert!((got - want).abs() <= 1e-12 * want.max(1.0));
    }

    #[test]
    fn invariant_under_common_shift(ws in vectors(1..9), shift in -50.0f64..50.0) {
        let moved: Vec<Vec<f64>> = ws.iter().map(|w| w.iter().map(|v| v + shift).collect()).collect();
        let a = consensus_error(&ws);
        let b = consensus_error(&moved);
        prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
    }
}

#[test]
fn two_worker_flood() {
    let g = Topology::complete(2).unwrap();
    let entry = EpochTraceEntry {
        epoch: 0,
        k: 1,
        edge: Edge::new(0, 1),
        sim_time: 1.0,
        group: vec![0, 1],
    };
    let count = count_pathsearch_messages(&[entry], &g);
    assert!(count <= 4 && count > 0);
    assert_eq!(count_pathsearch_messages(&[], &g), 0);
}

#[test]
fn traced_epochs_respect_broadcast_bound() {
    for seed in 0..10 {
        let config = RunConfig {
            n_workers: 8,
            topology: TopologySpec::Random { edge_prob: 0.3 },
            compute: ComputeModel::default(),
            k_budget: Some(7 * 6),
            seed,
            ..RunConfig::default()
        };
        let series = run(&config).unwrap();
        let b = series.realized_b().unwrap();
        assert_eq!(b, 7);
        for &m in &series.pathsearch_messages {
            assert!(m <= 2 * 8 * b as u64, "{m}");
        }
        assert_eq!(series.pathsearch_messages.len(), series.epoch_lengths.len());
    }
}
