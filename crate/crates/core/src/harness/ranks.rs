use std::fmt;

use serde::{Deserialize, Serialize};

use super::report::{BenchmarkReport, StrategySummary};
use crate::error::{CoreError, Result};
use crate::strategies::StrategyKind;

/// Metrics ranked per benchmark; lower is better for all three.
pub const RANK_METRICS: [&str; 3] = ["final_mae", "best_fr", "runtime_s"];

fn metric_values(s: &StrategySummary) -> [Option<f64>; 3] {
    [
        s.final_mae.map(|m| m.mean),
        s.best_fr,
        Some(s.runtime_s.mean),
    ]
}

/// Ranks 1..n in ascending order; ties share the mean of their positions.
/// Missing or NaN values rank after every present value.
pub fn average_ranks(values: &[Option<f64>]) -> Vec<f64> {
    let key = |v: Option<f64>| v.filter(|x| !x.is_nan()).unwrap_or(f64::INFINITY);
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| key(values[a]).total_cmp(&key(values[b])));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let v = key(values[order[start]]);
        let mut end = start + 1;
        while end < order.len() && key(values[order[end]]) == v {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankTable {
    pub benchmarks: Vec<String>,
    pub strategies: Vec<StrategyKind>,
    /// `mean_ranks[s][m]` for strategy `s` and metric `RANK_METRICS[m]`.
    pub mean_ranks: Vec<[f64; 3]>,
}

/// Mean rank of each strategy across benchmarks, per metric.
pub fn summarize_ranks(reports: &[BenchmarkReport]) -> Result<RankTable> {
    let first = reports
        .first()
        .ok_or_else(|| CoreError::Argument("rank summary needs at least one report".into()))?;
    let mut strategies = first.strategies();
    strategies.sort();
    for r in reports {
        let mut other = r.strategies();
        other.sort();
        if other != strategies {
            return Err(CoreError::Argument(format!(
                "report `{}` has strategies {:?}, expected {:?}",
                r.name, other, strategies
            )));
        }
    }
    let mut totals = vec![[0.0; 3]; strategies.len()];
    for r in reports {
        let values: Vec<[Option<f64>; 3]> = strategies
            .iter()
            .map(|&k| metric_values(r.summary(k).expect("checked above")))
            .collect();
        for m in 0..3 {
            let column: Vec<Option<f64>> = values.iter().map(|v| v[m]).collect();
            for (s, rank) in average_ranks(&column).into_iter().enumerate() {
                totals[s][m] += rank;
            }
        }
    }
    let n = reports.len() as f64;
    Ok(RankTable {
        benchmarks: reports.iter().map(|r| r.name.clone()).collect(),
        strategies,
        mean_ranks: totals.into_iter().map(|t| t.map(|v| v / n)).collect(),
    })
}

impl fmt::Display for RankTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:<10}", "strategy")?;
        for m in RANK_METRICS {
            write!(f, " {m:>10}")?;
        }
        writeln!(f)?;
        for (s, ranks) in self.strategies.iter().zip(&self.mean_ranks) {
            write!(f, "{:<10}", s.as_str())?;
            for r in ranks {
                write!(f, " {r:>10.2}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distinct_values() {
        assert_eq!(
            average_ranks(&[Some(9.0), Some(1.0), Some(2.0)]),
            vec![3.0, 1.0, 2.0]
        );
    }

    #[test]
    fn ties_share_average_position() {
        assert_eq!(
            average_ranks(&[Some(1.0), Some(1.0), Some(3.0)]),
            vec![1.5, 1.5, 3.0]
        );
        assert_eq!(
            average_ranks(&[Some(2.0), Some(2.0), Some(2.0)]),
            vec![2.0, 2.0, 2.0]
        );
    }

    #[test]
    fn missing_values_rank_last() {
        assert_eq!(
            average_ranks(&[None, Some(5.0), Some(f64::NAN)]),
            vec![2.5, 1.0, 2.5]
        );
    }
}
