//! Optimization problems split across workers.
//!
//! Two families are provided: per-worker quadratics with additive Gaussian
//! gradient noise (every constant known in closed form) and L2-regularized
//! softmax regression on synthetic Gaussian class data, partitioned i.i.d.
//! or by label.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::topology::WorkerId;

/// Default L2 regularization weight for the logistic problem.
pub const DEFAULT_LAMBDA: f64 = 1e-3;

#[derive(Debug, Error, PartialEq)]
pub enum ProblemError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("need at least one worker")]
    NoWorkers,
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error("need at least 2 classes, got {0}")]
    TooFewClasses(usize),
    #[error("unknown worker id {0}")]
    UnknownWorker(WorkerId),
    #[error("worker {0} has an empty shard")]
    EmptyShard(WorkerId),
    #[error("batch size must be at least 1")]
    ZeroBatch,
    #[error("partition infeasible: {0}")]
    Partition(String),
    #[error("noise sigma must be finite and non-negative, got {0}")]
    InvalidNoise(f64),
}

/// One labelled sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: usize,
}

/// Training data held by one worker.
#[derive(Debug, Clone, PartialEq)]
pub struct DataShard {
    pub worker: WorkerId,
    pub samples: Vec<Sample>,
}

impl DataShard {
    /// Per-class sample counts.
    pub fn class_histogram(&self, classes: usize) -> Vec<usize> {
        let mut h = vec![0; classes];
        for s in &self.samples {
            h[s.label] += 1;
        }
        h
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Quadratic {
    centers: Vec<Vec<f64>>,
    noise_sigma: f64,
    optimum: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
struct Softmax {
    features: usize,
    classes: usize,
    lambda: f64,
    shards: Vec<DataShard>,
    holdout: Vec<Sample>,
    non_iid: bool,
}

#[derive(Debug, Clone, PartialEq)]
enum Kind {
    Quadratic(Quadratic),
    Softmax(Softmax),
}

/// Global objective `F = (1/N) Σ_j F_j` with per-worker stochastic gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    n_workers: usize,
    dim: usize,
    kind: Kind,
    optimum: Option<Vec<f64>>,
}

/// `F_j(w) = ½‖w − c_j‖²` with gradient noise `N(0, noise_sigma²)` per coordinate.
pub fn quadratic_problem(centers: Vec<Vec<f64>>, noise_sigma: f64) -> Result<Problem, ProblemError> {
    let n = centers.len();
    if n == 0 {
        return Err(ProblemError::NoWorkers);
    }
    let d = centers[0].len();
    if d == 0 {
        return Err(ProblemError::ZeroDimension);
    }
    if let Some(bad) = centers.iter().find(|c| c.len() != d) {
        return Err(ProblemError::DimensionMismatch {
            expected: d,
            got: bad.len(),
        });
    }
    if !(noise_sigma.is_finite() && noise_sigma >= 0.0) {
        return Err(ProblemError::InvalidNoise(noise_sigma));
    }
    let optimum = mean_vector(&centers);
    Ok(Problem {
        n_workers: n,
        dim: d,
        optimum: Some(optimum.clone()),
        kind: Kind::Quadratic(Quadratic {
            centers,
            noise_sigma,
            optimum,
        }),
    })
}

/// Quadratic problem with centers drawn as `offset + spread · N(0, I)`.
pub fn random_quadratic(n: usize, d: usize, spread: f64, noise_sigma: f64, seed: u64) -> Result<Problem, ProblemError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let offset: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let centers = (0..n)
        .map(|_| {
            offset
                .iter()
                .map(|o| o + spread * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect();
    quadratic_problem(centers, noise_sigma)
}

/// Shape of a synthetic classification dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticSpec {
    pub n_workers: usize,
    pub samples_per_worker: usize,
    pub features: usize,
    pub classes: usize,
    pub non_iid: bool,
    /// Distinct labels per worker in non-i.i.d. mode.
    pub classes_per_worker: usize,
    pub lambda: f64,
    /// Standard deviation of the class means around the origin.
    pub class_sep: f64,
    pub seed: u64,
}

impl LogisticSpec {
    pub fn new(n_workers: usize, samples_per_worker: usize, features: usize, classes: usize, non_iid: bool, seed: u64) -> Self {
        LogisticSpec {
            n_workers,
            samples_per_worker,
            features,
            classes,
            non_iid,
            classes_per_worker: (classes / 2).max(1),
            lambda: DEFAULT_LAMBDA,
            class_sep: 1.0,
            seed,
        }
    }
}

pub fn logistic_problem(n: usize, samples_per_worker: usize, d: usize, classes: usize, non_iid: bool, seed: u64) -> Result<Problem, ProblemError> {
    logistic_from_spec(&LogisticSpec::new(n, samples_per_worker, d, classes, non_iid, seed))
}

/// Synthesizes Gaussian class-conditional data and partitions it.
///
/// Non-i.i.d. mode sorts samples by label, cuts each class into
/// `N · classes_per_worker / classes` equal pieces and deals the pieces so
/// every worker receives `classes_per_worker` pieces of distinct classes.
/// A hold-out set of one quarter the training size (20% of all generated
/// samples) is kept for accuracy reporting.
pub fn logistic_from_spec(spec: &LogisticSpec) -> Result<Problem, ProblemError> {
    let &LogisticSpec {
        n_workers: n,
        samples_per_worker: spw,
        features: d,
        classes,
        non_iid,
        classes_per_worker: m,
        lambda,
        class_sep,
        seed,
    } = spec;
    if n == 0 {
        return Err(ProblemError::NoWorkers);
    }
    if d == 0 {
        return Err(ProblemError::ZeroDimension);
    }
    if classes < 2 {
        return Err(ProblemError::TooFewClasses(classes));
    }
    if spw == 0 {
        return Err(ProblemError::Partition("samples_per_worker must be positive".into()));
    }
    let total = n * spw;
    if total % classes != 0 {
        return Err(ProblemError::Partition(format!(
            "{total} training samples cannot be split evenly over {classes} classes"
        )));
    }
    let per_class = total / classes;
    if non_iid {
        if m == 0 || m > classes {
            return Err(ProblemError::Partition(format!("classes_per_worker {m} outside 1..={classes}")));
        }
        if (n * m) % classes != 0 || spw % m != 0 {
            return Err(ProblemError::Partition(format!(
                "samples_per_worker {spw} with {m} classes per worker over {n} workers and {classes} classes does not split evenly"
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means: Vec<Vec<f64>> = (0..classes)
        .map(|_| (0..d).map(|_| class_sep * rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    let draw = |label: usize, rng: &mut ChaCha8Rng| Sample {
        features: means[label]
            .iter()
            .map(|mu| mu + rng.sample::<f64, _>(StandardNormal))
            .collect(),
        label,
    };
    let mut by_class: Vec<Vec<Sample>> = (0..classes)
        .map(|c| (0..per_class).map(|_| draw(c, &mut rng)).collect())
        .collect();
    let holdout_total = total / 4;
    let holdout: Vec<Sample> = (0..holdout_total).map(|i| draw(i % classes, &mut rng)).collect();

    let shards = if non_iid {
        let pieces = n * m / classes;
        let piece_len = per_class / pieces;
        let mut order: Vec<WorkerId> = (0..n).collect();
        order.shuffle(&mut rng);
        let shift = rng.random_range(0..n);
        let mut shards: Vec<DataShard> = (0..n)
            .map(|w| DataShard {
                worker: w,
                samples: Vec::with_capacity(spw),
            })
            .collect();
        for (c, class_samples) in by_class.iter_mut().enumerate() {
            for piece in 0..pieces {
                let worker = order[(shift + c * pieces + piece) % n];
                let chunk = class_samples.drain(..piece_len);
                shards[worker].samples.extend(chunk);
            }
        }
        shards
    } else {
        let mut all: Vec<Sample> = by_class.into_iter().flatten().collect();
        all.shuffle(&mut rng);
        all.chunks(spw)
            .enumerate()
            .map(|(w, chunk)| DataShard {
                worker: w,
                samples: chunk.to_vec(),
            })
            .collect()
    };

    Ok(Problem {
        n_workers: n,
        dim: d * classes,
        optimum: None,
        kind: Kind::Softmax(Softmax {
            features: d,
            classes,
            lambda,
            shards,
            holdout,
            non_iid,
        }),
    })
}

impl Problem {
    pub fn n_workers(&self) -> usize {
        self.n_workers
    }

    /// Parameter dimension.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_quadratic(&self) -> bool {
        matches!(self.kind, Kind::Quadratic(_))
    }

    pub fn is_iid(&self) -> bool {
        match &self.kind {
            Kind::Quadratic(q) => self.varsigma_sq_of(q) == 0.0,
            Kind::Softmax(s) => !s.non_iid,
        }
    }

    pub fn shards(&self) -> &[DataShard] {
        match &self.kind {
            Kind::Quadratic(_) => &[],
            Kind::Softmax(s) => &s.shards,
        }
    }

    pub fn holdout(&self) -> &[Sample] {
        match &self.kind {
            Kind::Quadratic(_) => &[],
            Kind::Softmax(s) => &s.holdout,
        }
    }

    pub fn classes(&self) -> Option<usize> {
        match &self.kind {
            Kind::Quadratic(_) => None,
            Kind::Softmax(s) => Some(s.classes),
        }
    }

    pub fn centers(&self) -> Option<&[Vec<f64>]> {
        match &self.kind {
            Kind::Quadratic(q) => Some(&q.centers),
            Kind::Softmax(_) => None,
        }
    }

    pub fn optimum(&self) -> Option<&[f64]> {
        self.optimum.as_deref()
    }

    pub fn optimal_value(&self) -> Option<f64> {
        self.optimum().map(|w| self.loss(w))
    }

    /// Gradient Lipschitz constant valid for every local objective.
    pub fn lipschitz(&self) -> f64 {
        match &self.kind {
            Kind::Quadratic(_) => 1.0,
            Kind::Softmax(s) => s
                .shards
                .iter()
                .map(|sh| {
                    let mean_sq = sh.samples.iter().map(|x| norm_sq(&x.features)).sum::<f64>()
                        / sh.samples.len().max(1) as f64;
                    0.5 * mean_sq + 2.0 * s.lambda
                })
                .fold(0.0, f64::max),
        }
    }

    /// Bound on `E‖g_j(w) − ∇F_j(w)‖²` for the quadratic family (`d σ²`).
    /// `None` for sampled objectives, whose variance has to be measured.
    pub fn sigma_l_sq(&self) -> Option<f64> {
        match &self.kind {
            Kind::Quadratic(q) => Some(self.dim as f64 * q.noise_sigma * q.noise_sigma),
            Kind::Softmax(_) => None,
        }
    }

    /// `max_j ‖∇F_j(w) − ∇F(w)‖²`. Independent of `w` for quadratics; for
    /// the softmax family it is evaluated at the given point.
    pub fn heterogeneity_sq(&self, w: &[f64]) -> f64 {
        match &self.kind {
            Kind::Quadratic(q) => self.varsigma_sq_of(q),
            Kind::Softmax(_) => {
                let (_, g) = self.global_objective(w);
                (0..self.n_workers)
                    .map(|j| dist_sq(&self.local_gradient(j, w), &g))
                    .fold(0.0, f64::max)
            }
        }
    }

    fn varsigma_sq_of(&self, q: &Quadratic) -> f64 {
        q.centers
            .iter()
            .map(|c| dist_sq(c, &q.optimum))
            .fold(0.0, f64::max)
    }

    pub fn local_loss(&self, j: WorkerId, w: &[f64]) -> f64 {
        match &self.kind {
            Kind::Quadratic(q) => 0.5 * dist_sq(w, &q.centers[j]),
            Kind::Softmax(s) => s.loss(&s.shards[j].samples, w),
        }
    }

    pub fn local_gradient(&self, j: WorkerId, w: &[f64]) -> Vec<f64> {
        match &self.kind {
            Kind::Quadratic(q) => w.iter().zip(&q.centers[j]).map(|(a, c)| a - c).collect(),
            Kind::Softmax(s) => {
                let samples: Vec<&Sample> = s.shards[j].samples.iter().collect();
                s.gradient(&samples, w)
            }
        }
    }

    pub fn loss(&self, w: &[f64]) -> f64 {
        (0..self.n_workers).map(|j| self.local_loss(j, w)).sum::<f64>() / self.n_workers as f64
    }

    /// Exact average of local losses and gradients.
    pub fn global_objective(&self, w: &[f64]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.dim];
        let mut loss = 0.0;
        for j in 0..self.n_workers {
            loss += self.local_loss(j, w);
            for (g, v) in grad.iter_mut().zip(self.local_gradient(j, w)) {
                *g += v;
            }
        }
        let inv = 1.0 / self.n_workers as f64;
        grad.iter_mut().for_each(|g| *g *= inv);
        (loss * inv, grad)
    }

    /// Mini-batch gradient on worker `j`'s shard. Batches are drawn without
    /// replacement, or with replacement when larger than the shard.
    pub fn stochastic_gradient<R: Rng + ?Sized>(
        &self,
        j: WorkerId,
        w: &[f64],
        batch_size: usize,
        rng: &mut R,
    ) -> Result<Vec<f64>, ProblemError> {
        if j >= self.n_workers {
            return Err(ProblemError::UnknownWorker(j));
        }
        if w.len() != self.dim {
            return Err(ProblemError::DimensionMismatch {
                expected: self.dim,
                got: w.len(),
            });
        }
        if batch_size == 0 {
            return Err(ProblemError::ZeroBatch);
        }
        match &self.kind {
            Kind::Quadratic(q) => {
                let mut g = self.local_gradient(j, w);
                if q.noise_sigma > 0.0 {
                    for v in &mut g {
                        *v += q.noise_sigma * rng.sample::<f64, _>(StandardNormal);
                    }
                }
                Ok(g)
            }
            Kind::Softmax(s) => {
                let shard = &s.shards[j].samples;
                if shard.is_empty() {
                    return Err(ProblemError::EmptyShard(j));
                }
                let batch: Vec<&Sample> = if batch_size == shard.len() {
                    shard.iter().collect()
                } else if batch_size < shard.len() {
                    rand::seq::index::sample(rng, shard.len(), batch_size)
                        .into_iter()
                        .map(|i| &shard[i])
                        .collect()
                } else {
                    (0..batch_size).map(|_| &shard[rng.random_range(0..shard.len())]).collect()
                };
                Ok(s.gradient(&batch, w))
            }
        }
    }

    /// Hold-out classification accuracy; `None` for quadratics.
    pub fn holdout_accuracy(&self, w: &[f64]) -> Option<f64> {
        match &self.kind {
            Kind::Quadratic(_) => None,
            Kind::Softmax(s) if s.holdout.is_empty() => None,
            Kind::Softmax(s) => {
                let correct = s.holdout.iter().filter(|x| s.predict(w, &x.features) == x.label).count();
                Some(correct as f64 / s.holdout.len() as f64)
            }
        }
    }

    /// Certifies the optimum by full-gradient descent (Nesterov momentum with
    /// adaptive restart) until `‖∇F‖ < tol`. Returns the gradient norm reached.
    pub fn solve_optimum(&mut self, tol: f64, max_iters: usize) -> f64 {
        let step = 1.0 / self.global_lipschitz();
        let mut x = vec![0.0; self.dim];
        let mut y = x.clone();
        let mut t = 1.0f64;
        let mut gnorm = f64::INFINITY;
        for _ in 0..max_iters {
            let (_, gy) = self.global_objective(&y);
            let x_next: Vec<f64> = y.iter().zip(&gy).map(|(a, g)| a - step * g).collect();
            gnorm = norm_sq(&self.global_objective(&x_next).1).sqrt();
            if gnorm < tol {
                x = x_next;
                break;
            }
            // gradient restart: drop momentum once it points uphill
            let uphill: f64 = gy.iter().zip(x_next.iter().zip(&x)).map(|(g, (a, b))| g * (a - b)).sum();
            let t_next = if uphill > 0.0 { 1.0 } else { 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt()) };
            let momentum = if uphill > 0.0 { 0.0 } else { (t - 1.0) / t_next };
            y = x_next
                .iter()
                .zip(&x)
                .map(|(a, b)| a + momentum * (a - b))
                .collect();
            x = x_next;
            t = t_next;
        }
        self.optimum = Some(x);
        gnorm
    }

    fn global_lipschitz(&self) -> f64 {
        match &self.kind {
            Kind::Quadratic(_) => 1.0,
            Kind::Softmax(s) => {
                let all = s.shards.iter().flat_map(|sh| &sh.samples);
                let count = s.shards.iter().map(|sh| sh.samples.len()).sum::<usize>().max(1);
                0.5 * all.map(|x| norm_sq(&x.features)).sum::<f64>() / count as f64 + 2.0 * s.lambda
            }
        }
    }

    /// One CSV row per training sample (`worker,label,x0,..`); hold-out rows
    /// use `holdout` in the worker column.
    pub fn dataset_csv(&self) -> String {
        let mut out = String::new();
        let Kind::Softmax(s) = &self.kind else {
            return out;
        };
        out.push_str("worker,label");
        for f in 0..s.features {
            let _ = write!(out, ",x{f}");
        }
        out.push('\n');
        let rows = s
            .shards
            .iter()
            .flat_map(|sh| sh.samples.iter().map(move |x| (sh.worker.to_string(), x)))
            .chain(s.holdout.iter().map(|x| ("holdout".to_string(), x)));
        for (who, x) in rows {
            let _ = write!(out, "{who},{}", x.label);
            for v in &x.features {
                let _ = write!(out, ",{v:?}");
            }
            out.push('\n');
        }
        out
    }
}

impl Softmax {
    fn logits(&self, w: &[f64], x: &[f64]) -> Vec<f64> {
        (0..self.classes)
            .map(|c| dot(&w[c * self.features..(c + 1) * self.features], x))
            .collect()
    }

    fn predict(&self, w: &[f64], x: &[f64]) -> usize {
        let z = self.logits(w, x);
        (0..self.classes)
            .max_by(|&a, &b| z[a].total_cmp(&z[b]).then(b.cmp(&a)))
            .unwrap_or(0)
    }

    fn loss(&self, samples: &[Sample], w: &[f64]) -> f64 {
        let data: f64 = samples
            .iter()
            .map(|x| {
                let z = self.logits(w, &x.features);
                log_sum_exp(&z) - z[x.label]
            })
            .sum::<f64>()
            / samples.len().max(1) as f64;
        data + self.lambda * norm_sq(w)
    }

    fn gradient(&self, samples: &[&Sample], w: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; w.len()];
        for x in samples {
            let z = self.logits(w, &x.features);
            let lse = log_sum_exp(&z);
            for c in 0..self.classes {
                let coeff = (z[c] - lse).exp() - if c == x.label { 1.0 } else { 0.0 };
                let block = &mut g[c * self.features..(c + 1) * self.features];
                for (gi, xi) in block.iter_mut().zip(&x.features) {
                    *gi += coeff * xi;
                }
            }
        }
        let inv = 1.0 / samples.len().max(1) as f64;
        for (gi, wi) in g.iter_mut().zip(w) {
            *gi = *gi * inv + 2.0 * self.lambda * wi;
        }
        g
    }
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn mean_vector(vs: &[Vec<f64>]) -> Vec<f64> {
    let d = vs.first().map_or(0, Vec::len);
    let mut m = vec![0.0; d];
    for v in vs {
        for (a, b) in m.iter_mut().zip(v) {
            *a += b;
        }
    }
    let inv = 1.0 / vs.len().max(1) as f64;
    m.iter_mut().for_each(|a| *a *= inv);
    m
}
