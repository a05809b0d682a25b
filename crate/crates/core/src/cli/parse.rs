//! Flat `key = value` config documents and sweep expansion.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::CliError;
use crate::engine::{Algorithm, BaseTime, EtaSchedule, InitMode, ProblemSpec, RunConfig, TopologySpec};
use crate::pathsearch::AcceptRule;
use crate::problems::DEFAULT_LAMBDA;
use crate::topology::Topology;

/// Keys that take a scalar value.
const SCALAR_KEYS: &[&str] = &[
    "topology",
    "edge_prob",
    "problem",
    "dim",
    "center_spread",
    "noise_sigma",
    "samples_per_worker",
    "classes",
    "classes_per_worker",
    "non_iid",
    "lambda",
    "class_sep",
    "compute",
    "compute_mean",
    "compute_lo",
    "compute_hi",
    "permanent_stragglers",
    "latency",
    "eta_schedule",
    "eta",
    "eta0",
    "delta",
    "k_budget",
    "time_budget",
    "pathsearch_rule",
    "init",
    "init_std",
    "loss_target",
    "trace_matrices",
    "out",
];

/// Keys that accept a `[a, b, ...]` list and become sweep axes.
const SWEEP_KEYS: &[&str] = &["algorithm", "workers", "n_workers", "seed", "seeds", "straggler_prob", "slowdown", "batch_size"];

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

/// Splits a document into entries. Rejects unknown and repeated keys.
pub fn parse_document(text: &str) -> Result<Vec<Entry>, CliError> {
    let mut entries: Vec<Entry> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (key, value) = body.split_once('=').ok_or_else(|| CliError::Syntax {
            line,
            msg: format!("expected `key = value`, got {body:?}"),
        })?;
        let key = key.trim();
        if !SCALAR_KEYS.contains(&key) && !SWEEP_KEYS.contains(&key) {
            return Err(CliError::UnknownKey { key: key.to_string(), line });
        }
        let canonical = canonical_key(key);
        if entries.iter().any(|e| canonical_key(&e.key) == canonical) {
            return Err(CliError::DuplicateKey { key: key.to_string(), line });
        }
        entries.push(Entry {
            key: key.to_string(),
            value: value.trim().to_string(),
            line,
        });
    }
    Ok(entries)
}

fn canonical_key(key: &str) -> &str {
    match key {
        "n_workers" => "workers",
        "seeds" => "seed",
        k => k,
    }
}

fn invalid(key: &str, msg: impl Into<String>) -> CliError {
    CliError::Invalid {
        key: key.to_string(),
        msg: msg.into(),
    }
}

fn parse_scalar<T: FromStr>(key: &str, v: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    v.trim().parse::<T>().map_err(|e| invalid(key, format!("cannot parse {v:?}: {e}")))
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>, CliError>
where
    T::Err: std::fmt::Display,
{
    let v = v.trim();
    let inner = match v.strip_prefix('[') {
        Some(rest) => rest
            .strip_suffix(']')
            .ok_or_else(|| invalid(key, format!("unterminated list {v:?}")))?,
        None => v,
    };
    let items: Vec<T> = inner
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_scalar(key, s))
        .collect::<Result<_, _>>()?;
    if items.is_empty() {
        return Err(invalid(key, "empty list"));
    }
    Ok(items)
}

fn parse_optional<T: FromStr>(key: &str, v: &str) -> Result<Option<T>, CliError>
where
    T::Err: std::fmt::Display,
{
    if v.is_empty() || v == "none" {
        Ok(None)
    } else {
        parse_scalar(key, v).map(Some)
    }
}

fn parse_rows(key: &str, v: &str) -> Result<Vec<Vec<f64>>, CliError> {
    v.split(';')
        .map(|row| {
            row.split_whitespace()
                .map(|x| parse_scalar::<f64>(key, x))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect()
}

/// One sweep axis, in declaration order.
#[derive(Debug, Clone, PartialEq)]
pub enum Axis {
    Algorithm(Vec<Algorithm>),
    Workers(Vec<usize>),
    Seeds(Vec<u64>),
    StragglerProb(Vec<f64>),
    Slowdown(Vec<f64>),
    BatchSize(Vec<usize>),
}

impl Axis {
    fn len(&self) -> usize {
        match self {
            Axis::Algorithm(v) => v.len(),
            Axis::Workers(v) => v.len(),
            Axis::Seeds(v) => v.len(),
            Axis::StragglerProb(v) => v.len(),
            Axis::Slowdown(v) => v.len(),
            Axis::BatchSize(v) => v.len(),
        }
    }

    fn same_kind(&self, other: &Axis) -> bool {
        std::mem::discriminant(self) == std::mem::discriminant(other)
    }

    fn apply(&self, i: usize, c: &mut RunConfig) {
        match self {
            Axis::Algorithm(v) => c.algorithm = v[i],
            Axis::Workers(v) => c.n_workers = v[i],
            Axis::Seeds(v) => c.seed = v[i],
            Axis::StragglerProb(v) => c.compute.straggler_prob = v[i],
            Axis::Slowdown(v) => c.compute.slowdown = v[i],
            Axis::BatchSize(v) => c.batch_size = v[i],
        }
    }
}

/// Command-line values that replace whatever the file says.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub algorithm: Option<Algorithm>,
    pub workers: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub k_budget: Option<usize>,
    pub time_budget: Option<f64>,
    pub pathsearch_rule: Option<AcceptRule>,
}

/// Validated list of runs plus the output directory.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub runs: Vec<RunConfig>,
    pub out_dir: PathBuf,
}

/// Reads the config file (if any), applies overrides and expands sweeps.
pub fn parse_config(path: Option<&Path>, overrides: &Overrides) -> Result<ExperimentPlan, CliError> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).map_err(|e| CliError::Io {
            path: p.to_path_buf(),
            msg: e.to_string(),
        })?,
        None => String::new(),
    };
    parse_config_str(&text, overrides)
}

pub fn parse_config_str(text: &str, overrides: &Overrides) -> Result<ExperimentPlan, CliError> {
    let entries = parse_document(text)?;
    let map: BTreeMap<&str, &str> = entries
        .iter()
        .map(|e| (canonical_key(&e.key), e.value.as_str()))
        .collect();
    let mut base = build_base(&map)?;
    let mut out_dir = map.get("out").map_or_else(|| PathBuf::from("results"), PathBuf::from);

    let mut axes: Vec<Axis> = Vec::new();
    for e in &entries {
        let key = canonical_key(&e.key);
        let axis = match key {
            "algorithm" => Axis::Algorithm(parse_list(key, &e.value)?),
            "workers" => Axis::Workers(parse_list(key, &e.value)?),
            "seed" => Axis::Seeds(parse_list(key, &e.value)?),
            "straggler_prob" => Axis::StragglerProb(parse_list(key, &e.value)?),
            "slowdown" => Axis::Slowdown(parse_list(key, &e.value)?),
            "batch_size" => Axis::BatchSize(parse_list(key, &e.value)?),
            _ => continue,
        };
        axes.push(axis);
    }
    let mut pin = |axis: Axis| match axes.iter_mut().find(|a| a.same_kind(&axis)) {
        Some(slot) => *slot = axis,
        None => axes.push(axis),
    };
    if let Some(a) = overrides.algorithm {
        pin(Axis::Algorithm(vec![a]));
    }
    if let Some(w) = overrides.workers {
        pin(Axis::Workers(vec![w]));
    }
    if let Some(s) = overrides.seed {
        pin(Axis::Seeds(vec![s]));
    }
    if let Some(k) = overrides.k_budget {
        base.k_budget = Some(k);
    }
    if let Some(t) = overrides.time_budget {
        base.time_budget = Some(t);
    }
    if let Some(r) = overrides.pathsearch_rule {
        base.pathsearch_rule = r;
    }
    if let Some(o) = &overrides.out {
        out_dir = o.clone();
    }

    let runs = expand(&base, &axes)?;
    let mut seen = BTreeMap::new();
    for (i, r) in runs.iter().enumerate() {
        if let Some(j) = seen.insert(r.config_hash(), i) {
            return Err(CliError::DuplicateRun { first: j, second: i });
        }
    }
    Ok(ExperimentPlan { runs, out_dir })
}

/// Cartesian product of the axes, first axis outermost.
pub fn expand(base: &RunConfig, axes: &[Axis]) -> Result<Vec<RunConfig>, CliError> {
    let total: usize = axes.iter().map(Axis::len).product();
    let mut runs = Vec::with_capacity(total);
    for mut flat in 0..total {
        let mut idx = vec![0; axes.len()];
        for (slot, axis) in idx.iter_mut().zip(axes).rev() {
            *slot = flat % axis.len();
            flat /= axis.len();
        }
        let mut c = base.clone();
        for (axis, &i) in axes.iter().zip(&idx) {
            axis.apply(i, &mut c);
        }
        c.validate().map_err(CliError::from)?;
        runs.push(c);
    }
    Ok(runs)
}

fn reject_unless(map: &BTreeMap<&str, &str>, keys: &[&str], context: &str) -> Result<(), CliError> {
    for k in keys {
        if map.contains_key(k) {
            return Err(invalid(k, format!("not used with {context}")));
        }
    }
    Ok(())
}

/// Builds the non-sweep part of the config. Sweep keys are applied later.
fn build_base(map: &BTreeMap<&str, &str>) -> Result<RunConfig, CliError> {
    let mut c = RunConfig::default();
    let get = |k: &str| map.get(k).copied();

    c.topology = match get("topology").unwrap_or("random") {
        "random" => TopologySpec::Random {
            edge_prob: get("edge_prob").map_or(Ok(0.3), |v| parse_scalar("edge_prob", v))?,
        },
        other => {
            reject_unless(map, &["edge_prob"], "a non-random topology")?;
            match other {
                "complete" => TopologySpec::Complete,
                "ring" => TopologySpec::Ring,
                "path" => TopologySpec::Path,
                s if s.starts_with("file:") => TopologySpec::File(PathBuf::from(&s[5..])),
                s if s.starts_with("edges:") => {
                    let t: Topology = s[6..]
                        .replace(';', "\n")
                        .parse()
                        .map_err(|e| invalid("topology", format!("{e}")))?;
                    TopologySpec::Explicit(t)
                }
                s => return Err(invalid("topology", format!("unknown topology {s:?}"))),
            }
        }
    };

    const LOGISTIC_ONLY: &[&str] = &["samples_per_worker", "classes", "classes_per_worker", "non_iid", "lambda", "class_sep"];
    let noise = get("noise_sigma").map_or(Ok(0.0), |v| parse_scalar("noise_sigma", v))?;
    c.problem = match get("problem").unwrap_or("quadratic") {
        "quadratic" => {
            reject_unless(map, LOGISTIC_ONLY, "problem = quadratic")?;
            ProblemSpec::Quadratic {
                dim: get("dim").map_or(Ok(10), |v| parse_scalar("dim", v))?,
                spread: get("center_spread").map_or(Ok(1.0), |v| parse_scalar("center_spread", v))?,
                noise_sigma: noise,
            }
        }
        "logistic" => {
            reject_unless(map, &["center_spread", "noise_sigma"], "problem = logistic")?;
            let classes: usize = get("classes").map_or(Ok(10), |v| parse_scalar("classes", v))?;
            ProblemSpec::Logistic {
                samples_per_worker: get("samples_per_worker").map_or(Ok(200), |v| parse_scalar("samples_per_worker", v))?,
                features: get("dim").map_or(Ok(20), |v| parse_scalar("dim", v))?,
                classes,
                classes_per_worker: get("classes_per_worker")
                    .map_or(Ok((classes / 2).max(1)), |v| parse_scalar("classes_per_worker", v))?,
                non_iid: get("non_iid").map_or(Ok(true), |v| parse_scalar("non_iid", v))?,
                lambda: get("lambda").map_or(Ok(DEFAULT_LAMBDA), |v| parse_scalar("lambda", v))?,
                class_sep: get("class_sep").map_or(Ok(1.0), |v| parse_scalar("class_sep", v))?,
            }
        }
        s if s.starts_with("centers:") => {
            reject_unless(map, LOGISTIC_ONLY, "explicit centers")?;
            reject_unless(map, &["dim", "center_spread"], "explicit centers")?;
            ProblemSpec::QuadraticCenters {
                centers: parse_rows("problem", &s[8..])?,
                noise_sigma: noise,
            }
        }
        s => return Err(invalid("problem", format!("unknown problem {s:?}"))),
    };

    let f = |k: &str, default: f64| get(k).map_or(Ok(default), |v| parse_scalar::<f64>(k, v));
    c.compute.base = match get("compute").unwrap_or("constant") {
        "constant" => {
            reject_unless(map, &["compute_lo", "compute_hi"], "compute = constant")?;
            BaseTime::Constant(f("compute_mean", 1.0)?)
        }
        "uniform" => {
            reject_unless(map, &["compute_mean"], "compute = uniform")?;
            BaseTime::Uniform {
                lo: f("compute_lo", 0.5)?,
                hi: f("compute_hi", 1.5)?,
            }
        }
        "exponential" => {
            reject_unless(map, &["compute_lo", "compute_hi"], "compute = exponential")?;
            BaseTime::Exponential {
                mean: f("compute_mean", 1.0)?,
            }
        }
        s if s.starts_with("scripted:") => {
            reject_unless(map, &["compute_mean", "compute_lo", "compute_hi"], "scripted compute")?;
            BaseTime::Scripted(parse_rows("compute", &s[9..])?)
        }
        s => return Err(invalid("compute", format!("unknown compute model {s:?}"))),
    };
    if let Some(v) = get("permanent_stragglers") {
        c.compute.permanent_stragglers = if v.is_empty() { Vec::new() } else { parse_list("permanent_stragglers", v)? };
    }
    c.latency = f("latency", 0.0)?;

    c.eta = match get("eta_schedule").unwrap_or(if map.contains_key("eta") { "constant" } else { "geometric" }) {
        "constant" => {
            reject_unless(map, &["eta0", "delta"], "eta_schedule = constant")?;
            let e = get("eta").ok_or_else(|| invalid("eta", "constant schedule needs a value"))?;
            EtaSchedule::Constant(parse_scalar("eta", e)?)
        }
        "corollary" => {
            reject_unless(map, &["eta", "eta0", "delta"], "eta_schedule = corollary")?;
            EtaSchedule::Corollary
        }
        "geometric" => {
            reject_unless(map, &["eta"], "eta_schedule = geometric")?;
            EtaSchedule::Geometric {
                eta0: f("eta0", 0.1)?,
                delta: f("delta", 0.95)?,
            }
        }
        s => return Err(invalid("eta_schedule", format!("unknown schedule {s:?}"))),
    };

    if let Some(v) = get("k_budget") {
        c.k_budget = parse_optional("k_budget", v)?;
    }
    if let Some(v) = get("time_budget") {
        c.time_budget = parse_optional("time_budget", v)?;
    }
    if let Some(v) = get("pathsearch_rule") {
        c.pathsearch_rule = parse_scalar("pathsearch_rule", v)?;
    }
    c.init = match get("init").unwrap_or("zeros") {
        "zeros" => {
            reject_unless(map, &["init_std"], "init = zeros")?;
            InitMode::Zeros
        }
        "gaussian" => InitMode::Gaussian { std: f("init_std", 1.0)? },
        s => return Err(invalid("init", format!("unknown init {s:?}"))),
    };
    if let Some(v) = get("loss_target") {
        c.loss_target = parse_optional("loss_target", v)?;
    }
    if let Some(v) = get("trace_matrices") {
        c.trace_matrices = parse_scalar("trace_matrices", v)?;
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_one_default_run() {
        let plan = parse_config_str("", &Overrides::default()).unwrap();
        assert_eq!(plan.runs, vec![RunConfig::default()]);
        let c = &plan.runs[0];
        assert_eq!(c.batch_size, 128);
        assert_eq!(c.compute.straggler_prob, 0.1);
        assert_eq!(c.compute.slowdown, 10.0);
        assert_eq!(c.eta, EtaSchedule::Geometric { eta0: 0.1, delta: 0.95 });
    }

    #[test]
    fn sweep_is_cartesian_in_declaration_order() {
        let text = "n_workers = [4, 8, 16]\nseeds = [1, 2]\n";
        let plan = parse_config_str(text, &Overrides::default()).unwrap();
        let got: Vec<(usize, u64)> = plan.runs.iter().map(|r| (r.n_workers, r.seed)).collect();
        assert_eq!(got, vec![(4, 1), (4, 2), (8, 1), (8, 2), (16, 1), (16, 2)]);

        let text = "seeds = [1, 2]\nworkers = [4, 8, 16]\n";
        let plan = parse_config_str(text, &Overrides::default()).unwrap();
        let got: Vec<(usize, u64)> = plan.runs.iter().map(|r| (r.n_workers, r.seed)).collect();
        assert_eq!(got, vec![(4, 1), (8, 1), (16, 1), (4, 2), (8, 2), (16, 2)]);
    }

    #[test]
    fn range_error_names_key() {
        let err = parse_config_str("straggler_prob = 1.5", &Overrides::default()).unwrap_err();
        assert!(matches!(&err, CliError::Invalid { key, .. } if key == "straggler_prob"), "{err}");
        assert!(err.to_string().contains("straggler_prob"));
    }

    #[test]
    fn strictness() {
        let o = Overrides::default();
        assert!(matches!(parse_config_str("wokers = 4", &o), Err(CliError::UnknownKey { line: 1, .. })));
        assert!(matches!(parse_config_str("seed = 1\nseeds = [2]", &o), Err(CliError::DuplicateKey { line: 2, .. })));
        assert!(matches!(parse_config_str("just words", &o), Err(CliError::Syntax { line: 1, .. })));
        assert!(matches!(parse_config_str("classes = 4", &o), Err(CliError::Invalid { .. })));
        assert!(matches!(parse_config_str("seeds = [3, 3]", &o), Err(CliError::DuplicateRun { .. })));
    }

    #[test]
    fn comments_and_blank_lines() {
        let text = "# header\n\nworkers = 4 # trailing\n  \nk_budget = 50\n";
        let plan = parse_config_str(text, &Overrides::default()).unwrap();
        assert_eq!(plan.runs[0].n_workers, 4);
        assert_eq!(plan.runs[0].k_budget, Some(50));
    }

    #[test]
    fn overrides_win() {
        let text = "algorithm = [aau, sync]\nworkers = [4, 8]\nk_budget = 10\nout = a\n";
        let o = Overrides {
            algorithm: Some(Algorithm::AsyncPairwise),
            workers: None,
            seed: Some(9),
            out: Some(PathBuf::from("b")),
            k_budget: Some(20),
            time_budget: Some(3.0),
            pathsearch_rule: Some(AcceptRule::Literal),
        };
        let plan = parse_config_str(text, &o).unwrap();
        assert_eq!(plan.runs.len(), 2);
        assert!(plan.runs.iter().all(|r| r.algorithm == Algorithm::AsyncPairwise && r.seed == 9));
        assert!(plan.runs.iter().all(|r| r.k_budget == Some(20) && r.time_budget == Some(3.0)));
        assert!(plan.runs.iter().all(|r| r.pathsearch_rule == AcceptRule::Literal));
        assert_eq!(plan.out_dir, PathBuf::from("b"));
    }

    #[test]
    fn canonical_text_round_trips() {
        let configs = [
            RunConfig::default(),
            RunConfig {
                algorithm: Algorithm::Sync,
                topology: TopologySpec::Ring,
                problem: ProblemSpec::logistic(50, 6, 4, true),
                compute: crate::engine::ComputeModel {
                    base: BaseTime::Uniform { lo: 0.5, hi: 2.0 },
                    straggler_prob: 0.25,
                    slowdown: 4.0,
                    permanent_stragglers: vec![1, 3],
                },
                eta: EtaSchedule::Constant(0.05),
                time_budget: Some(100.0),
                init: InitMode::Gaussian { std: 0.5 },
                loss_target: Some(0.3),
                trace_matrices: true,
                ..RunConfig::default()
            },
            RunConfig {
                n_workers: 3,
                topology: TopologySpec::Explicit(Topology::path(3).unwrap()),
                problem: ProblemSpec::QuadraticCenters {
                    centers: vec![vec![1.0, -2.5], vec![0.0, 0.1], vec![3.0, 4.0]],
                    noise_sigma: 0.2,
                },
                compute: crate::engine::ComputeModel {
                    base: BaseTime::Scripted(vec![vec![1.0, 2.0], vec![3.0]]),
                    ..Default::default()
                },
                eta: EtaSchedule::Corollary,
                k_budget: Some(77),
                ..RunConfig::default()
            },
        ];
        for c in configs {
            let plan = parse_config_str(&c.canonical_text(), &Overrides::default()).unwrap();
            assert_eq!(plan.runs, vec![c]);
        }
    }
}
