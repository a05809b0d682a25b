use dsgd_aau::problems::{logistic_problem, norm_sq, quadratic_problem, Problem};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Per-coordinate sample mean and standard error of `draws` gradients.
fn mean_and_se(p: &Problem, j: usize, w: &[f64], batch: usize, draws: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = w.len();
    let mut sum = vec![0.0; d];
    let mut sum_sq = vec![0.0; d];
    for _ in 0..draws {
        let g = p.stochastic_gradient(j, w, batch, &mut rng).unwrap();
        for i in 0..d {
            sum[i] += g[i];
            sum_sq[i] += g[i] * g[i];
        }
    }
    let n = draws as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let se = (0..d)
        .map(|i| ((sum_sq[i] / n - mean[i] * mean[i]).max(0.0) * n / (n - 1.0) / n).sqrt())
        .collect();
    (mean, se)
}

fn assert_unbiased(p: &Problem, j: usize, w: &[f64], batch: usize) {
    let exact = p.local_gradient(j, w);
    let (mean, se) = mean_and_se(p, j, w, batch, 100_000, 99);
    for i in 0..w.len() {
        assert!(
            (mean[i] - exact[i]).abs() <= 3.0 * se[i] + 1e-15,
            "coordinate {i}: {} vs {} (se {})",
            mean[i],
            exact[i],
            se[i]
        );
    }
}

#[test]
fn minibatch_gradients_are_unbiased() {
    let p = logistic_problem(4, 40, 3, 2, false, 11).unwrap();
    let w: Vec<f64> = (0..p.dim()).map(|i| 0.1 * i as f64 - 0.2).collect();
    assert_unbiased(&p, 2, &w, 5);
    // batches larger than the shard are drawn with replacement
    assert_unbiased(&p, 1, &w, 60);
    let q = quadratic_problem(vec![vec![1.0, -2.0, 0.5], vec![0.0; 3]], 0.7).unwrap();
    assert_unbiased(&q, 0, &[0.3, 0.3, 0.3], 1);
}

#[test]
fn iid_shards_have_uniform_label_mix() {
    let (n, spw, classes) = (8, 200, 4);
    let p = logistic_problem(n, spw, 5, classes, false, 5).unwrap();
    let hists: Vec<Vec<usize>> = p.shards().iter().map(|s| s.class_histogram(classes)).collect();
    let total: f64 = (n * spw) as f64;
    let col: Vec<f64> = (0..classes).map(|c| hists.iter().map(|h| h[c] as f64).sum()).collect();
    let mut chi2 = 0.0;
    for h in &hists {
        let row: f64 = h.iter().sum::<usize>() as f64;
        for c in 0..classes {
            let expected = row * col[c] / total;
            chi2 += (h[c] as f64 - expected).powi(2) / expected;
        }
    }
    // 99.9th percentile of chi-square with (8-1)(4-1) = 21 degrees of freedom
    assert!(chi2 < 46.80, "chi-square {chi2}");
    assert!(hists.iter().all(|h| h.iter().all(|&c| c > 0)));
}

#[test]
fn non_iid_shards_use_few_labels_and_cover_all() {
    let (n, classes) = (8, 6);
    let p = logistic_problem(n, 60, 3, classes, true, 8).unwrap();
    let mut covered = vec![false; classes];
    for s in p.shards() {
        let h = s.class_histogram(classes);
        assert!(h.iter().filter(|&&c| c > 0).count() <= classes / 2);
        for (c, &k) in h.iter().enumerate() {
            covered[c] |= k > 0;
        }
    }
    assert!(covered.into_iter().all(|c| c));
}

#[test]
fn logistic_optimum_is_certified() {
    let mut p = logistic_problem(4, 50, 4, 4, true, 21).unwrap();
    let reached = p.solve_optimum(1e-10, 200_000);
    assert!(reached < 1e-10, "solver stopped at {reached}");
    let w = p.optimum().unwrap().to_vec();
    let (loss, grad) = p.global_objective(&w);
    assert!(norm_sq(&grad).sqrt() < 1e-8);
    // no coordinate direction decreases the loss
    for i in 0..w.len() {
        for h in [1e-4, -1e-4] {
            let mut v = w.clone();
            v[i] += h;
            assert!(p.loss(&v) >= loss - 1e-14);
        }
    }
}

fn finite_difference(p: &Problem, j: usize, w: &[f64]) -> Vec<f64> {
    let h = 1e-6;
    (0..w.len())
        .map(|i| {
            let mut a = w.to_vec();
            let mut b = w.to_vec();
            a[i] += h;
            b[i] -= h;
            (p.local_loss(j, &a) - p.local_loss(j, &b)) / (2.0 * h)
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn logistic_gradient_matches_finite_differences(seed: u64, w in proptest::collection::vec(-2.0f64..2.0, 6)) {
        let p = logistic_problem(2, 10, 3, 2, false, seed).unwrap();
        for j in 0..2 {
            let g = p.local_gradient(j, &w);
            let fd = finite_difference(&p, j, &w);
            for (a, b) in g.iter().zip(&fd) {
                prop_assert!((a - b).abs() < 1e-6, "{} vs {}", a, b);
            }
        }
    }

    #[test]
    fn quadratic_global_objective_is_average(centers in proptest::collection::vec(proptest::collection::vec(-5.0f64..5.0, 3), 1..6), w in proptest::collection::vec(-5.0f64..5.0, 3)) {
        let n = centers.len();
        let p = quadratic_problem(centers.clone(), 0.0).unwrap();
        let (loss, grad) = p.global_objective(&w);
        let want_loss = centers.iter().map(|c| 0.5 * c.iter().zip(&w).map(|(a, b)| (b - a).powi(2)).sum::<f64>()).sum::<f64>() / n as f64;
        prop_assert!((loss - want_loss).abs() < 1e-12);
        for i in 0..3 {
            let want = centers.iter().map(|c| w[i] - c[i]).sum::<f64>() / n as f64;
            prop_assert!((grad[i] - want).abs() < 1e-12);
        }
        let opt = p.optimum().unwrap();
        prop_assert!(norm_sq(&p.global_objective(opt).1) < 1e-24);
    }
}
