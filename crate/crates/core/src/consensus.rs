//! Metropolis consensus matrices, their ordered products and the mixing
//! diagnostics used to check product convergence to the uniform matrix.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::topology::{Edge, WorkerId};

#[derive(Debug, Error, PartialEq)]
pub enum ConsensusError {
    #[error("worker {0} has no wait count")]
    MissingWaitCount(WorkerId),
    #[error("edge {edge} references a worker outside dimension {n}")]
    EdgeOutOfRange { edge: Edge, n: usize },
    #[error("diagonal entry for worker {worker} would be negative ({value})")]
    NegativeDiagonal { worker: WorkerId, value: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("empty matrix sequence")]
    Empty,
    #[error("no strictly positive entry in any matrix")]
    AllZero,
    #[error("beta must lie in (0, 1), got {0}")]
    BetaOutOfRange(f64),
    #[error("invalid bound arguments: {0}")]
    InvalidArgs(String),
    #[error("bound overflows double precision")]
    Overflow,
}

/// Dense row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        DenseMatrix { n, data }
    }

    pub fn uniform(n: usize) -> Self {
        DenseMatrix {
            n,
            data: vec![1.0 / n as f64; n * n],
        }
    }

    /// Panics if the rows are ragged or not square.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for row in rows {
            assert_eq!(row.len(), n, "matrix must be square");
            data.extend_from_slice(row);
        }
        DenseMatrix { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn entries(&self) -> &[f64] {
        &self.data
    }

    pub fn mul(&self, rhs: &DenseMatrix) -> Result<DenseMatrix, ConsensusError> {
        if rhs.n != self.n {
            return Err(ConsensusError::DimensionMismatch {
                expected: self.n,
                got: rhs.n,
            });
        }
        let n = self.n;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for l in 0..n {
                let a = self.data[i * n + l];
                if a == 0.0 {
                    continue;
                }
                let rhs_row = &rhs.data[l * n..(l + 1) * n];
                let out_row = &mut out[i * n..(i + 1) * n];
                for (o, &b) in out_row.iter_mut().zip(rhs_row) {
                    *o += a * b;
                }
            }
        }
        Ok(DenseMatrix { n, data: out })
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    /// Largest `|sum - 1|` over all rows and columns.
    pub fn max_stochastic_deviation(&self) -> f64 {
        let n = self.n;
        let mut worst = 0.0f64;
        for i in 0..n {
            let row: f64 = self.row(i).iter().sum();
            let col: f64 = (0..n).map(|r| self.get(r, i)).sum();
            worst = worst.max((row - 1.0).abs()).max((col - 1.0).abs());
        }
        worst
    }

    /// Row-major CSV with shortest round-trip decimal formatting.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.n {
            let row: Vec<String> = self.row(i).iter().map(|v| format!("{v:?}")).collect();
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }
}

/// One mixing matrix P(k) together with the active edges it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusMatrix {
    matrix: DenseMatrix,
    support: Vec<Edge>,
}

impl ConsensusMatrix {
    pub fn identity(n: usize) -> Self {
        ConsensusMatrix {
            matrix: DenseMatrix::identity(n),
            support: Vec::new(),
        }
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix.get(i, j)
    }

    pub fn support(&self) -> &[Edge] {
        &self.support
    }
}

/// Metropolis weights: `1 / (1 + max(p_i, p_j))` on every active edge, the
/// remaining mass on the diagonal, zero elsewhere.
pub fn metropolis_matrix(
    n: usize,
    group_edges: &[Edge],
    wait_counts: &BTreeMap<WorkerId, usize>,
) -> Result<ConsensusMatrix, ConsensusError> {
    let mut m = DenseMatrix::identity(n);
    let mut support: Vec<Edge> = group_edges.to_vec();
    support.sort_unstable();
    support.dedup();
    let mut off_diag_sum = vec![0.0; n];
    for &e in &support {
        if e.hi() >= n {
            return Err(ConsensusError::EdgeOutOfRange { edge: e, n });
        }
        let p_lo = *wait_counts
            .get(&e.lo())
            .ok_or(ConsensusError::MissingWaitCount(e.lo()))?;
        let p_hi = *wait_counts
            .get(&e.hi())
            .ok_or(ConsensusError::MissingWaitCount(e.hi()))?;
        let w = 1.0 / (1.0 + p_lo.max(p_hi) as f64);
        m.set(e.lo(), e.hi(), w);
        m.set(e.hi(), e.lo(), w);
        off_diag_sum[e.lo()] += w;
        off_diag_sum[e.hi()] += w;
    }
    for (i, &s) in off_diag_sum.iter().enumerate() {
        let d = 1.0 - s;
        if d < 0.0 {
            return Err(ConsensusError::NegativeDiagonal { worker: i, value: d });
        }
        m.set(i, i, d);
    }
    Ok(ConsensusMatrix { matrix: m, support })
}

/// Metropolis matrix with each endpoint's wait count equal to its degree
/// inside `group_edges`.
pub fn metropolis_for_edges(n: usize, group_edges: &[Edge]) -> Result<ConsensusMatrix, ConsensusError> {
    let mut counts = BTreeMap::new();
    let mut uniq = group_edges.to_vec();
    uniq.sort_unstable();
    uniq.dedup();
    for e in &uniq {
        *counts.entry(e.lo()).or_insert(0) += 1;
        *counts.entry(e.hi()).or_insert(0) += 1;
    }
    metropolis_matrix(n, &uniq, &counts)
}

pub fn verify_doubly_stochastic(m: &DenseMatrix, tol: f64) -> bool {
    m.entries().iter().all(|&v| v >= -tol) && m.max_stochastic_deviation() <= tol
}

/// Ordered product P(s) P(s+1) ... P(k).
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixProduct {
    matrix: DenseMatrix,
    span: (usize, usize),
}

impl MatrixProduct {
    pub fn start(first: &ConsensusMatrix, s: usize) -> Self {
        MatrixProduct {
            matrix: first.matrix.clone(),
            span: (s, s),
        }
    }

    /// Right-multiplies by the next matrix in sequence.
    pub fn extend(&mut self, next: &ConsensusMatrix) -> Result<(), ConsensusError> {
        self.matrix = self.matrix.mul(&next.matrix)?;
        self.span.1 += 1;
        Ok(())
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.matrix
    }

    pub fn span(&self) -> (usize, usize) {
        self.span
    }
}

/// Left-to-right product of a non-empty sequence; the span is `(0, len - 1)`.
pub fn phi_product(matrices: &[ConsensusMatrix]) -> Result<MatrixProduct, ConsensusError> {
    let (first, rest) = matrices.split_first().ok_or(ConsensusError::Empty)?;
    let mut prod = MatrixProduct::start(first, 0);
    for m in rest {
        if m.dim() != first.dim() {
            return Err(ConsensusError::DimensionMismatch {
                expected: first.dim(),
                got: m.dim(),
            });
        }
        prod.extend(m)?;
    }
    Ok(prod)
}

/// `max_{i,j} |1/N - Φ(i,j)|`.
pub fn phi_uniform_deviation(m: &DenseMatrix) -> f64 {
    let target = 1.0 / m.dim() as f64;
    m.entries()
        .iter()
        .map(|v| (target - v).abs())
        .fold(0.0, f64::max)
}

/// Elementwise deviation bound for `Φ_{k:s}`:
/// `2 (1 + β^{-NB}) / (1 - β^{NB}) · (1 - β^{NB})^{(k-s)/NB}`.
///
/// Evaluated in log space so large `NB` does not overflow intermediate powers.
pub fn lemma_deviation_bound(beta: f64, n: usize, b: usize, k: usize, s: usize) -> Result<f64, ConsensusError> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(ConsensusError::BetaOutOfRange(beta));
    }
    if n < 2 || b < 1 || k < s {
        return Err(ConsensusError::InvalidArgs(format!("n={n}, b={b}, k={k}, s={s}")));
    }
    let nb = (n * b) as f64;
    let ln_beta = beta.ln();
    let beta_nb = (nb * ln_beta).exp();
    let ln_one_minus = (-beta_nb).ln_1p();
    // ln(1 + β^{-NB}) = -NB ln β + ln(1 + β^{NB})
    let ln_num = -nb * ln_beta + beta_nb.ln_1p();
    let ln_bound = std::f64::consts::LN_2 + ln_num - ln_one_minus + ((k - s) as f64 / nb) * ln_one_minus;
    let v = ln_bound.exp();
    if v.is_finite() {
        Ok(v)
    } else {
        Err(ConsensusError::Overflow)
    }
}

/// Smallest strictly positive entry over all matrices.
pub fn extract_beta<'a, I>(matrices: I) -> Result<f64, ConsensusError>
where
    I: IntoIterator<Item = &'a DenseMatrix>,
{
    matrices
        .into_iter()
        .flat_map(|m| m.entries().iter().copied())
        .filter(|&v| v > 0.0)
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.min(v))))
        .ok_or(ConsensusError::AllZero)
}
