//! Closed-form convergence constants, learning-rate limits and the
//! ergodic gradient-norm bound for adaptive asynchronous decentralized SGD.
//!
//! Every quantity involves `β^{NB}` or `β^{-NB}`, which span hundreds of
//! orders of magnitude. Powers are formed in log space and differences near
//! cancellation are rewritten (`expm1`/`ln_1p`, rationalized square roots,
//! completed squares) so the double-precision results keep close to full
//! relative accuracy.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum TheoryError {
    #[error("parameter {name} = {value} is out of range ({why})")]
    Invalid {
        name: &'static str,
        value: f64,
        why: &'static str,
    },
    #[error("range error: {0}")]
    Range(String),
}

fn invalid(name: &'static str, value: f64, why: &'static str) -> TheoryError {
    TheoryError::Invalid { name, value, why }
}

/// Inputs of the convergence bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryParams {
    pub beta: f64,
    pub n: usize,
    pub b: usize,
    pub lipschitz: f64,
    pub sigma_l: f64,
    pub varsigma: f64,
    /// `F(w̄₀) − F(w*)`.
    pub f0_gap: f64,
}

impl TheoryParams {
    pub fn validate(&self) -> Result<(), TheoryError> {
        validate_mixing(self.beta, self.n, self.b)?;
        if !(self.lipschitz > 0.0 && self.lipschitz.is_finite()) {
            return Err(invalid("lipschitz", self.lipschitz, "must be positive"));
        }
        for (name, v) in [("sigma_l", self.sigma_l), ("varsigma", self.varsigma), ("f0_gap", self.f0_gap)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(name, v, "must be non-negative"));
            }
        }
        Ok(())
    }
}

fn validate_mixing(beta: f64, n: usize, b: usize) -> Result<(), TheoryError> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(invalid("beta", beta, "must lie in (0, 1)"));
    }
    if n < 1 {
        return Err(invalid("n", n as f64, "must be at least 1"));
    }
    if b < 1 {
        return Err(invalid("b", b as f64, "must be at least 1"));
    }
    Ok(())
}

/// Mixing constants derived from `(β, N, B)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixingConstants {
    /// `(1 − β^{NB})^{1/NB}`
    pub q: f64,
    /// `1 − q`, computed without cancellation.
    pub one_minus_q: f64,
    /// `(1 + β^{-NB}) / (1 − β^{NB})`, the form used for the learning-rate limit.
    pub c: f64,
    /// Twice `c`, the form appearing in the elementwise product deviation bound.
    pub c_doubled: f64,
}

pub fn q_and_c(beta: f64, n: usize, b: usize) -> Result<MixingConstants, TheoryError> {
    validate_mixing(beta, n, b)?;
    let nb = (n * b) as f64;
    let log_pow = nb * beta.ln(); // ln β^{NB} < 0
    let pow = log_pow.exp();
    let inv_pow = (-log_pow).exp();
    if !inv_pow.is_finite() {
        return Err(TheoryError::Range(format!(
            "beta^-(NB) overflows for beta={beta}, N={n}, B={b}"
        )));
    }
    let one_minus_pow = -log_pow.exp_m1();
    if one_minus_pow <= 0.0 {
        return Err(TheoryError::Range(format!("1 - beta^(NB) underflows for beta={beta}")));
    }
    let log_q = (-pow).ln_1p() / nb;
    let q = log_q.exp();
    let one_minus_q = -log_q.exp_m1();
    let c = (1.0 + inv_pow) / one_minus_pow;
    if !c.is_finite() {
        return Err(TheoryError::Range(format!("C overflows for beta={beta}, N={n}, B={b}")));
    }
    Ok(MixingConstants {
        q,
        one_minus_q,
        c,
        c_doubled: 2.0 * c,
    })
}

/// `(1 − q)² / (30 C² L² N)` and `(1 − q) / (C L)`.
fn mixing_ratio(params: &TheoryParams) -> Result<(f64, f64), TheoryError> {
    params.validate()?;
    let mc = q_and_c(params.beta, params.n, params.b)?;
    let u = mc.one_minus_q / (mc.c * params.lipschitz);
    Ok((u * u / (30.0 * params.n as f64), u))
}

/// Largest constant learning rate admitted by the convergence theorem:
/// `min(sqrt(a + 9N⁴/16) − 3N²/4, 1/L)` with `a = (1−q)²/(30C²L²N)`.
pub fn eta_max(params: &TheoryParams) -> Result<f64, TheoryError> {
    let (a, _) = mixing_ratio(params)?;
    if a < f64::MIN_POSITIVE {
        return Err(TheoryError::Range(format!("learning-rate limit underflows (a = {a:e})")));
    }
    let half_b = 0.75 * (params.n as f64).powi(2);
    // sqrt(a + h²) − h rewritten as a / (sqrt(a + h²) + h)
    let root_branch = a / ((a + half_b * half_b).sqrt() + half_b);
    Ok(root_branch.min(1.0 / params.lipschitz))
}

/// Right-hand side of the ergodic gradient-norm bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhsBound {
    pub value: f64,
    /// `6 (F(w̄₀) − F*) / (η K)`
    pub optimization_term: f64,
    /// `(9L + 2) η σ_L² / (3N)`
    pub noise_term: f64,
    /// `2 η ς² / N`
    pub heterogeneity_term: f64,
    /// Set when `η` exceeds [`eta_max`]; the bound is then not guaranteed.
    pub eta_exceeds_max: bool,
}

pub fn rhs_bound(params: &TheoryParams, eta: f64, k_total: usize) -> Result<RhsBound, TheoryError> {
    params.validate()?;
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(invalid("eta", eta, "must be positive"));
    }
    if k_total < 1 {
        return Err(invalid("k_total", 0.0, "must be at least 1"));
    }
    let limit = eta_max(params)?;
    let n = params.n as f64;
    let l = params.lipschitz;
    let optimization_term = 6.0 * params.f0_gap / (eta * k_total as f64);
    let noise_term = (9.0 * l + 2.0) * eta / (3.0 * n) * params.sigma_l * params.sigma_l;
    let heterogeneity_term = 2.0 * eta / n * params.varsigma * params.varsigma;
    Ok(RhsBound {
        value: optimization_term + noise_term + heterogeneity_term,
        optimization_term,
        noise_term,
        heterogeneity_term,
        eta_exceeds_max: eta > limit,
    })
}

/// `sqrt(N / K)`.
pub fn corollary_eta(n: usize, k_total: usize) -> Result<f64, TheoryError> {
    if n < 1 {
        return Err(invalid("n", 0.0, "must be at least 1"));
    }
    if k_total < 1 {
        return Err(invalid("k_total", 0.0, "must be at least 1"));
    }
    Ok((n as f64 / k_total as f64).sqrt())
}

/// Minimum iteration count for the linear-speedup rate:
/// `2N / (a + 9N⁴/16 − √3 N^{3/2} (1−q) / (C L √40))`.
///
/// The denominator equals `(u/√(30N) − 3N²/4)²` with `u = (1−q)/(CL)`, so
/// it is evaluated in that form. It vanishes only at `u = 3N²√(30N)/4`;
/// values indistinguishable from zero are reported as a range error.
pub fn corollary_k_threshold(params: &TheoryParams) -> Result<f64, TheoryError> {
    let (_, u) = mixing_ratio(params)?;
    let n = params.n as f64;
    let half_b = 0.75 * n * n;
    let diff = u / (30.0 * n).sqrt() - half_b;
    let denom = diff * diff;
    // the displayed three-term sum cannot resolve a denominator below this
    let resolution = 1e-12 * (u * u / (30.0 * n) + half_b * half_b);
    if !(denom > resolution) {
        return Err(TheoryError::Range(format!(
            "iteration threshold denominator {denom:e} is not positive"
        )));
    }
    Ok(2.0 * n / denom)
}

/// Everything the `theory` CLI subcommand prints.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoryReport {
    pub params: TheoryParams,
    pub mixing: MixingConstants,
    pub eta_max: f64,
    pub k_threshold: Result<f64, TheoryError>,
    pub eta: f64,
    pub k_total: usize,
    pub rhs: RhsBound,
}

impl TheoryReport {
    /// Uses `eta` if given, else `eta_max`.
    pub fn compute(params: TheoryParams, eta: Option<f64>, k_total: usize) -> Result<Self, TheoryError> {
        let mixing = q_and_c(params.beta, params.n, params.b)?;
        let limit = eta_max(&params)?;
        let eta = eta.unwrap_or(limit);
        let rhs = rhs_bound(&params, eta, k_total)?;
        Ok(TheoryReport {
            params,
            mixing,
            eta_max: limit,
            k_threshold: corollary_k_threshold(&params),
            eta,
            k_total,
            rhs,
        })
    }
}

impl fmt::Display for TheoryReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = &self.params;
        let rows: Vec<(&str, String)> = vec![
            ("beta", format!("{:e}", p.beta)),
            ("N", p.n.to_string()),
            ("B", p.b.to_string()),
            ("L", format!("{:e}", p.lipschitz)),
            ("sigma_L", format!("{:e}", p.sigma_l)),
            ("varsigma", format!("{:e}", p.varsigma)),
            ("f0_gap", format!("{:e}", p.f0_gap)),
            ("q", format!("{:.15e}", self.mixing.q)),
            ("1-q", format!("{:.15e}", self.mixing.one_minus_q)),
            ("C", format!("{:.15e}", self.mixing.c)),
            ("C (doubled)", format!("{:.15e}", self.mixing.c_doubled)),
            ("eta_max", format!("{:.15e}", self.eta_max)),
            (
                "K threshold",
                match &self.k_threshold {
                    Ok(v) => format!("{v:.15e}"),
                    Err(e) => e.to_string(),
                },
            ),
            ("eta", format!("{:.15e}", self.eta)),
            ("K", self.k_total.to_string()),
            ("rhs bound", format!("{:.15e}", self.rhs.value)),
            ("  optimization", format!("{:.15e}", self.rhs.optimization_term)),
            ("  noise", format!("{:.15e}", self.rhs.noise_term)),
            ("  heterogeneity", format!("{:.15e}", self.rhs.heterogeneity_term)),
        ];
        for (k, v) in rows {
            writeln!(f, "{k:<16} {v}")?;
        }
        if self.rhs.eta_exceeds_max {
            writeln!(f, "warning: eta exceeds eta_max; the bound is not guaranteed")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(beta: f64, n: usize, b: usize, l: f64) -> TheoryParams {
        TheoryParams {
            beta,
            n,
            b,
            lipschitz: l,
            sigma_l: 1.0,
            varsigma: 1.0,
            f0_gap: 1.0,
        }
    }

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn constants_for_half_beta() {
        let mc = q_and_c(0.5, 2, 1).unwrap();
        assert!(rel(mc.q, 0.75f64.sqrt()) < 1e-15);
        assert!(rel(mc.c, 5.0 / 0.75) < 1e-15);
        assert!(rel(mc.c_doubled, 10.0 / 0.75) < 1e-15);
    }

    #[test]
    fn q_stays_in_unit_interval() {
        for &beta in &[1e-3, 0.1, 0.5, 0.9, 0.999] {
            for n in 1..6 {
                for b in 1..4 {
                    let mc = q_and_c(beta, n, b).unwrap();
                    // q itself may round to 1; the complement must not
                    assert!(mc.q > 0.0 && mc.q <= 1.0, "beta={beta} n={n} b={b}");
                    assert!(mc.one_minus_q > 0.0 && mc.one_minus_q < 1.0, "beta={beta} n={n} b={b}");
                    assert!((mc.q + mc.one_minus_q - 1.0).abs() < 1e-15);
                }
            }
        }
        assert!(q_and_c(0.999, 2, 1).unwrap().q < 0.05);
    }

    #[test]
    fn overflow_reported_as_range_error() {
        assert!(matches!(q_and_c(1e-3, 64, 63), Err(TheoryError::Range(_))));
        assert!(matches!(q_and_c(1.0, 2, 1), Err(TheoryError::Invalid { name: "beta", .. })));
    }

    #[test]
    fn eta_max_branches() {
        let tiny = eta_max(&params(0.5, 2, 1, 1.0)).unwrap();
        assert!(tiny > 1.0e-6 && tiny < 1.3e-6, "{tiny}");
        let big_l = eta_max(&params(0.5, 2, 1, 1e6)).unwrap();
        assert!(big_l <= 1e-6);
        for l in [1e-3, 1.0, 1e3] {
            assert!(eta_max(&params(0.3, 3, 2, l)).unwrap() <= 1.0 / l);
        }
    }

    #[test]
    fn rhs_structure() {
        let mut p = params(0.5, 2, 1, 1.0);
        p.sigma_l = 0.0;
        p.varsigma = 0.0;
        let r = rhs_bound(&p, 1e-6, 1000).unwrap();
        assert!(rel(r.value, 6.0 / (1e-6 * 1000.0)) < 1e-15);
        let r2 = rhs_bound(&p, 1e-6, 2000).unwrap();
        assert!(rel(r2.optimization_term, r.optimization_term / 2.0) < 1e-15);
        assert!(!r.eta_exceeds_max);
        assert!(rhs_bound(&p, 0.5, 10).unwrap().eta_exceeds_max);
    }

    #[test]
    fn corollary_learning_rate() {
        assert!(rel(corollary_eta(4, 400).unwrap(), 0.1) < 1e-15);
        assert_eq!(corollary_eta(7, 7).unwrap(), 1.0);
        assert!(rel(corollary_eta(1, 1_000_000).unwrap(), 1e-3) < 1e-15);
    }

    #[test]
    fn threshold_denominator_is_a_square() {
        // both forms agree away from the root
        let p = params(0.5, 2, 1, 1.0);
        let mc = q_and_c(0.5, 2, 1).unwrap();
        let n = 2.0f64;
        let u = mc.one_minus_q / mc.c;
        let direct = u * u / (30.0 * n) + 9.0 * n.powi(4) / 16.0
            - 3f64.sqrt() * n.powf(1.5) * mc.one_minus_q / (mc.c * 40f64.sqrt());
        assert!(rel(corollary_k_threshold(&p).unwrap(), 2.0 * n / direct) < 1e-14);

        // pick L so that (1-q)/(CL) hits the root exactly
        let root_u = 0.75 * n * n * (30.0 * n).sqrt();
        let adversarial = params(0.5, 2, 1, u / root_u);
        assert!(matches!(corollary_k_threshold(&adversarial), Err(TheoryError::Range(_))));
    }

    #[test]
    fn threshold_scales_like_inverse_cube() {
        let at = |n: usize| corollary_k_threshold(&params(0.5, n, 1, 1.0)).unwrap();
        // 2N / (9N⁴/16) halves the threshold by 8 per doubling of N
        let ratio = at(8) / at(16);
        assert!((ratio / 8.0 - 1.0).abs() < 0.2, "{ratio}");
    }

    #[test]
    fn report_renders() {
        let r = TheoryReport::compute(params(0.5, 2, 1, 1.0), None, 100).unwrap();
        let text = r.to_string();
        assert!(text.contains("eta_max"));
        assert!(text.contains("C (doubled)"));
        assert!(!text.contains("warning"));
    }
}
