//! Comparison table: mean and sample standard deviation over seeds.

use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use crate::engine::RunConfig;
use crate::metrics::MetricsSeries;

/// Summary entries aggregated in the comparison table.
pub const COMPARED_METRICS: &[&str] = &[
    "final_loss",
    "final_grad_norm_sq",
    "final_consensus_err",
    "final_sim_time_s",
    "time_to_target_s",
    "total_messages",
    "total_bytes",
    "holdout_accuracy",
];

/// Canonical config text with the seed removed; runs sharing it are grouped.
pub fn group_key(config: &RunConfig) -> String {
    config
        .to_kv()
        .into_iter()
        .filter(|(k, _)| k != "seed")
        .map(|(k, v)| format!("{k} = {v}\n"))
        .collect()
}

/// Numeric value of a summary entry, `None` when blank or absent.
pub fn summary_value(summary_csv: &str, key: &str) -> Option<f64> {
    summary_csv
        .lines()
        .skip(1)
        .filter_map(|l| l.split_once(','))
        .find(|(k, _)| *k == key)
        .and_then(|(_, v)| v.parse().ok())
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub group: String,
    pub algorithm: String,
    pub workers: usize,
    pub straggler_prob: f64,
    pub slowdown: f64,
    pub batch_size: usize,
    pub runs: usize,
    /// `(mean, sample std)` per entry of [`COMPARED_METRICS`]; `None` when no
    /// run produced the value, std `NaN` with a single value.
    pub stats: Vec<Option<(f64, f64)>>,
}

fn mean_std(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std = if xs.len() < 2 {
        f64::NAN
    } else {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    Some((mean, std))
}

pub fn aggregate(runs: &[(&RunConfig, &MetricsSeries)]) -> Vec<AggregateRow> {
    let mut groups: Vec<(String, Vec<(&RunConfig, String)>)> = Vec::new();
    for (config, series) in runs {
        let key = group_key(config);
        let summary = series.summary_csv(config.loss_target);
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, members)) => members.push((config, summary)),
            None => groups.push((key, vec![(config, summary)])),
        }
    }
    groups
        .into_iter()
        .map(|(key, members)| {
            let c = members[0].0;
            let stats = COMPARED_METRICS
                .iter()
                .map(|m| {
                    let xs: Vec<f64> = members.iter().filter_map(|(_, s)| summary_value(s, m)).collect();
                    mean_std(&xs)
                })
                .collect();
            AggregateRow {
                group: hex::encode(&Sha256::digest(key.as_bytes())[..6]),
                algorithm: c.algorithm.to_string(),
                workers: c.n_workers,
                straggler_prob: c.compute.straggler_prob,
                slowdown: c.compute.slowdown,
                batch_size: c.batch_size,
                runs: members.len(),
                stats,
            }
        })
        .collect()
}

pub fn comparison_csv(runs: &[(&RunConfig, &MetricsSeries)]) -> String {
    let mut out = String::from("group,algorithm,workers,straggler_prob,slowdown,batch_size,runs");
    for m in COMPARED_METRICS {
        let _ = write!(out, ",{m}_mean,{m}_std");
    }
    out.push('\n');
    for row in aggregate(runs) {
        let _ = write!(
            out,
            "{},{},{},{:?},{:?},{},{}",
            row.group, row.algorithm, row.workers, row.straggler_prob, row.slowdown, row.batch_size, row.runs
        );
        for s in &row.stats {
            match s {
                Some((mean, std)) if std.is_nan() => {
                    let _ = write!(out, ",{mean:?},");
                }
                Some((mean, std)) => {
                    let _ = write!(out, ",{mean:?},{std:?}");
                }
                None => out.push_str(",,"),
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_std() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!(mean_std(&[7.0]).unwrap().1.is_nan());
        assert!(mean_std(&[]).is_none());
    }

    #[test]
    fn summary_lookup() {
        let s = "key,value\nfinal_loss,0.5\ntime_to_target_s,\n";
        assert_eq!(summary_value(s, "final_loss"), Some(0.5));
        assert_eq!(summary_value(s, "time_to_target_s"), None);
        assert_eq!(summary_value(s, "missing"), None);
    }

    #[test]
    fn seeds_share_a_group() {
        let a = RunConfig::default();
        let b = RunConfig { seed: 2, ..a.clone() };
        let c = RunConfig { n_workers: 4, ..a.clone() };
        assert_eq!(group_key(&a), group_key(&b));
        assert_ne!(group_key(&a), group_key(&c));
    }
}
