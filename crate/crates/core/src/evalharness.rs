//! Correlation of metric scores with mean human judgments, per benchmark and
//! averaged across benchmarks.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::corpus::BenchmarkRecord;
use crate::encoder::EncoderModel;
use crate::error::{Error, Result};
use crate::metric::{score_batch, MetricScore};
use crate::tokenizer::Vocabulary;

pub const MIN_BENCHMARK_SIZE: usize = 10;

/// 1-based ranks; tied values share the mean of the ranks they span.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn check_pair(x: &[f64], y: &[f64], min_len: usize) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::InvalidInput(format!("length mismatch: {} vs {}", x.len(), y.len())));
    }
    if x.len() < min_len {
        return Err(Error::InvalidInput(format!("need at least {min_len} points, got {}", x.len())));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("correlation input".into()));
    }
    Ok(())
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y, 2)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        let which = if sxx == 0.0 { "first" } else { "second" };
        return Err(Error::UndefinedCorrelation(format!("{which} sequence is constant")));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Pearson correlation of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y, 3)?;
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Two-sided p-value of a correlation under the t approximation with
/// `n - 2` degrees of freedom; `|rho| = 1` gives 0.
pub fn p_value(rho: f64, n: usize) -> Result<f64> {
    if n < 4 {
        return Err(Error::InvalidInput(format!("p-value needs n >= 4, got {n}")));
    }
    if !(-1.0..=1.0).contains(&rho) {
        return Err(Error::InvalidInput(format!("correlation {rho} outside [-1, 1]")));
    }
    if rho.abs() == 1.0 {
        return Ok(0.0);
    }
    let df = (n - 2) as f64;
    let t = rho * (df / (1.0 - rho * rho)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::InvalidInput(e.to_string()))?;
    Ok((2.0 * dist.cdf(-t.abs())).min(1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainCorrelation {
    pub spearman: f64,
    pub pearson: f64,
    pub n: usize,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub per_domain: BTreeMap<String, DomainCorrelation>,
    pub average_spearman: f64,
}

impl CorrelationReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Correlations from already-computed scores, matched to records by pair_id.
pub fn report_from_scores(
    benchmarks: &BTreeMap<String, Vec<BenchmarkRecord>>,
    scores: &BTreeMap<String, Vec<MetricScore>>,
) -> Result<CorrelationReport> {
    if benchmarks.is_empty() {
        return Err(Error::InvalidInput("no benchmarks given".into()));
    }
    let mut per_domain = BTreeMap::new();
    for (domain, records) in benchmarks {
        if records.len() < MIN_BENCHMARK_SIZE {
            return Err(Error::InvalidInput(format!(
                "benchmark {domain} has {} records, need at least {MIN_BENCHMARK_SIZE}",
                records.len()
            )));
        }
        let by_id: HashMap<&str, f64> = scores
            .get(domain)
            .ok_or_else(|| Error::InvalidInput(format!("no scores for benchmark {domain}")))?
            .iter()
            .map(|s| (s.pair_id.as_str(), s.score))
            .collect();
        let mut s = Vec::with_capacity(records.len());
        let mut q = Vec::with_capacity(records.len());
        for r in records {
            let v = by_id
                .get(r.pair.pair_id.as_str())
                .ok_or_else(|| Error::InvalidInput(format!("{domain}: no score for {}", r.pair.pair_id)))?;
            s.push(*v);
            q.push(r.human_score);
        }
        let with_domain = |e: Error| match e {
            Error::UndefinedCorrelation(m) => Error::UndefinedCorrelation(format!("benchmark {domain}: {m}")),
            other => other,
        };
        let rho = spearman(&s, &q).map_err(with_domain)?;
        let r = pearson(&s, &q).map_err(with_domain)?;
        per_domain.insert(
            domain.clone(),
            DomainCorrelation {
                spearman: rho,
                pearson: r,
                n: records.len(),
                p_value: p_value(rho, records.len())?,
            },
        );
    }
    let average_spearman = per_domain.values().map(|d| d.spearman).sum::<f64>() / per_domain.len() as f64;
    Ok(CorrelationReport {
        per_domain,
        average_spearman,
    })
}

/// Score every benchmark record with `model`, then correlate.
pub fn score_benchmarks(
    model: &EncoderModel,
    vocab: &Vocabulary,
    benchmarks: &BTreeMap<String, Vec<BenchmarkRecord>>,
    parallelism: usize,
) -> Result<BTreeMap<String, Vec<MetricScore>>> {
    benchmarks
        .iter()
        .map(|(domain, records)| {
            let pairs: Vec<_> = records.iter().map(|r| r.pair.clone()).collect();
            Ok((domain.clone(), score_batch(model, vocab, &pairs, parallelism)?))
        })
        .collect()
}

pub fn evaluate(
    model: &EncoderModel,
    vocab: &Vocabulary,
    benchmarks: &BTreeMap<String, Vec<BenchmarkRecord>>,
    parallelism: usize,
) -> Result<CorrelationReport> {
    let scores = score_benchmarks(model, vocab, benchmarks, parallelism)?;
    report_from_scores(benchmarks, &scores)
}

/// Plain-text table, one row per benchmark plus an average row, one column
/// per configuration. Spearman values with p > 0.05 are marked with `*`.
pub fn render_table(columns: &[(String, CorrelationReport)]) -> String {
    let mut rows: Vec<String> = columns
        .iter()
        .flat_map(|(_, r)| r.per_domain.keys().cloned())
        .collect();
    rows.sort();
    rows.dedup();
    let cell = |r: &CorrelationReport, d: &str| match r.per_domain.get(d) {
        Some(c) => format!("{:.3}{}", c.spearman, if c.p_value > 0.05 { "*" } else { "" }),
        None => "-".to_string(),
    };
    let mut grid: Vec<Vec<String>> = vec![std::iter::once("benchmark".to_string())
        .chain(columns.iter().map(|(n, _)| n.clone()))
        .collect()];
    for d in &rows {
        grid.push(std::iter::once(d.clone()).chain(columns.iter().map(|(_, r)| cell(r, d))).collect());
    }
    grid.push(
        std::iter::once("average".to_string())
            .chain(columns.iter().map(|(_, r)| format!("{:.3}", r.average_spearman)))
            .collect(),
    );
    let widths: Vec<usize> = (0..grid[0].len())
        .map(|c| grid.iter().map(|row| row[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, row) in grid.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, v)| if c == 0 { format!("{v:<w$}", w = widths[c]) } else { format!("{v:>w$}", w = widths[c]) })
            .collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
        if i == 0 || i == grid.len() - 2 {
            let _ = writeln!(out, "{}", "-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spearman_examples() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap(), 1.0);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
        assert_eq!(spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap(), 0.8);
        assert!(matches!(
            spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(Error::UndefinedCorrelation(_))
        ));
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn p_values() {
        assert!((p_value(0.0, 10).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(p_value(1.0, 10).unwrap(), 0.0);
        assert_eq!(p_value(-1.0, 10).unwrap(), 0.0);
        // t = 0.5·sqrt(98/0.75) ≈ 5.715, far in the tail
        assert!(p_value(0.5, 100).unwrap() < 1e-6);
        assert!(p_value(0.5, 3).is_err());
    }

    #[test]
    fn table_layout() {
        let mk = |a: f64, b: f64| CorrelationReport {
            per_domain: BTreeMap::from([
                ("d1".into(), DomainCorrelation { spearman: a, pearson: a, n: 10, p_value: 0.01 }),
                ("d2".into(), DomainCorrelation { spearman: b, pearson: b, n: 10, p_value: 0.2 }),
            ]),
            average_spearman: (a + b) / 2.0,
        };
        let t = render_table(&[("MDD-T".into(), mk(0.4, 0.6)), ("MDD-S".into(), mk(0.5, 0.7))]);
        assert!(t.contains("0.600*"), "{t}");
        assert!(t.lines().any(|l| l.starts_with("average") && l.contains("0.500") && l.contains("0.600")));
    }
}
