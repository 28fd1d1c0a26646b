//! Quality and cost measures: recall at top-k, scanning rate, and cost
//! ratios of paired runs.

use std::collections::HashSet;
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::KnnGraph;

/// `sum_i |truth_i[..k] ∩ eval_i[..k]| / (n * k)`, comparing ids as sets.
pub fn recall_at_k<A: AsRef<[u32]>, B: AsRef<[u32]>>(results: &[A], truth: &[B], k: usize) -> Result<f64> {
    if results.len() != truth.len() {
        return Err(Error::LengthMismatch(format!(
            "{} evaluated lists but {} truth lists",
            results.len(),
            truth.len()
        )));
    }
    if k == 0 {
        return Err(Error::param("k must be at least 1"));
    }
    if results.is_empty() {
        return Ok(1.0);
    }
    let mut hits = 0usize;
    for (i, (r, t)) in results.iter().zip(truth).enumerate() {
        let (r, t) = (r.as_ref(), t.as_ref());
        if t.len() < k {
            return Err(Error::LengthMismatch(format!("truth list {i} has {} < {k} entries", t.len())));
        }
        let want: HashSet<u32> = t[..k].iter().copied().collect();
        hits += r.iter().take(k).filter(|id| want.contains(id)).count();
    }
    Ok(hits as f64 / (results.len() * k) as f64)
}

/// Recall of `graph` against `truth`, matching lists by member id.
pub fn graph_recall(graph: &KnnGraph, truth: &KnnGraph, k: usize) -> Result<f64> {
    let map = truth.position_map();
    let mut aligned = Vec::with_capacity(graph.len());
    for (&m, list) in graph.members().iter().zip(graph.lists()) {
        let pos = map
            .get(m)
            .ok_or_else(|| Error::LengthMismatch(format!("vertex {m} has no truth list")))?;
        aligned.push((list.ids().collect::<Vec<_>>(), truth.list(pos).ids().collect::<Vec<_>>()));
    }
    let (r, t): (Vec<_>, Vec<_>) = aligned.into_iter().unzip();
    recall_at_k(&r, &t, k)
}

/// Distance evaluations relative to the `n(n-1)/2` of brute force.
pub fn scanning_rate(evaluations: u64, n: usize) -> f64 {
    if n < 2 {
        return 0.0;
    }
    evaluations as f64 / (n as f64 * (n as f64 - 1.0) / 2.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub name: String,
    pub evaluations: u64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioRow {
    pub name: String,
    pub scanning_rate: f64,
    pub recall: f64,
    pub rate_ratio: f64,
}

/// Scanning rate, recall, and rate relative to `runs[baseline]`.
pub fn ratio_report(runs: &[RunSummary], baseline: usize, n: usize) -> Result<Vec<RatioRow>> {
    let base = runs
        .get(baseline)
        .ok_or_else(|| Error::param("ratio report needs a baseline run"))?;
    let base_rate = scanning_rate(base.evaluations, n);
    Ok(runs
        .iter()
        .map(|r| {
            let rate = scanning_rate(r.evaluations, n);
            RatioRow {
                name: r.name.clone(),
                scanning_rate: rate,
                recall: r.recall,
                rate_ratio: rate / base_rate,
            }
        })
        .collect())
}

pub fn write_ratio_csv(mut w: impl Write, rows: &[RatioRow]) -> Result<()> {
    writeln!(w, "run,scanning_rate,recall,rate_ratio")?;
    for r in rows {
        writeln!(w, "{},{:.6},{:.6},{:.6}", r.name, r.scanning_rate, r.recall, r.rate_ratio)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recall_examples() {
        let truth: Vec<Vec<u32>> = (0..4).map(|i| (i * 10..i * 10 + 10).collect()).collect();
        assert_eq!(recall_at_k(&truth, &truth, 10).unwrap(), 1.0);
        let half: Vec<Vec<u32>> = truth
            .iter()
            .map(|t| t[..5].iter().copied().chain(100..105).collect())
            .collect();
        assert_eq!(recall_at_k(&half, &truth, 10).unwrap(), 0.5);
        let mut shuffled = truth.clone();
        shuffled.iter_mut().for_each(|l| l.reverse());
        assert_eq!(recall_at_k(&shuffled, &truth, 10).unwrap(), 1.0);
        assert!(recall_at_k(&truth[..3], &truth, 10).is_err());
        assert!(recall_at_k(&truth, &truth, 11).is_err());
    }

    #[test]
    fn scanning_rate_examples() {
        assert_eq!(scanning_rate(0, 100), 0.0);
        assert_eq!(scanning_rate(4950, 100), 1.0);
    }

    #[test]
    fn ratio_examples() {
        let n = 100_000;
        let pairs = n as f64 * (n as f64 - 1.0) / 2.0;
        let run = |name: &str, rate: f64| RunSummary {
            name: name.into(),
            evaluations: (rate * pairs).round() as u64,
            recall: 0.99,
        };
        let rows = ratio_report(&[run("nnd", 0.216), run("s", 0.064), run("j", 0.126)], 0, n).unwrap();
        assert_eq!(rows[0].rate_ratio, 1.0);
        assert!((rows[1].rate_ratio - 0.296).abs() < 1e-3);
        assert!((rows[2].rate_ratio - 0.583).abs() < 1e-3);
        assert!(ratio_report(&[], 0, n).is_err());
        let mut csv = Vec::new();
        write_ratio_csv(&mut csv, &rows).unwrap();
        assert!(String::from_utf8(csv).unwrap().starts_with("run,scanning_rate,recall,rate_ratio\n"));
    }
}
