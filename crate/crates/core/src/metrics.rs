//! Regression metrics and forgetting measures over an evaluation matrix.
//!
//! Indices are 0-based: row `k` holds the test MAE of every experience
//! `j <= k` measured right after training on experience `k`.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Smallest |target| for which a percent error is defined.
pub const MPE_MIN_TARGET: f64 = 1e-12;

fn check_pair(predictions: &[f64], targets: &[f64]) -> Result<()> {
    if predictions.is_empty() {
        return Err(CoreError::Argument("metric over zero samples".into()));
    }
    if predictions.len() != targets.len() {
        return Err(CoreError::Shape(format!(
            "{} predictions vs {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    Ok(())
}

pub fn mae(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    check_pair(predictions, targets)?;
    let sum: f64 = predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| (t - p).abs())
        .sum();
    Ok(sum / predictions.len() as f64)
}

/// Mean percent error, in percent.
pub fn mpe(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    check_pair(predictions, targets)?;
    if let Some(i) = targets.iter().position(|t| t.abs() < MPE_MIN_TARGET) {
        return Err(CoreError::Metric(format!(
            "percent error undefined: target of sample {i} is {}",
            targets[i]
        )));
    }
    let sum: f64 = predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| (t - p).abs() / t.abs())
        .sum();
    Ok(100.0 * sum / predictions.len() as f64)
}

/// Lower-triangular matrix of per-experience test MAE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMatrix {
    size: usize,
    rows: Vec<Vec<f64>>,
}

impl EvalMatrix {
    pub fn new(size: usize) -> Self {
        Self {
            size,
            rows: Vec::with_capacity(size),
        }
    }

    /// Builds a matrix from complete or partial rows, validating their shape.
    pub fn from_rows(size: usize, rows: Vec<Vec<f64>>) -> Result<Self> {
        let mut m = Self::new(size);
        for row in rows {
            m.push_row(row)?;
        }
        Ok(m)
    }

    /// Appends the evaluation after the next training stage.
    pub fn push_row(&mut self, row: Vec<f64>) -> Result<()> {
        let k = self.rows.len();
        if k >= self.size {
            return Err(CoreError::Shape(format!(
                "matrix already has {} rows",
                self.size
            )));
        }
        if row.len() != k + 1 {
            return Err(CoreError::Shape(format!(
                "row {k} must hold {} entries, got {}",
                k + 1,
                row.len()
            )));
        }
        if let Some(v) = row.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(CoreError::Argument(format!(
                "MAE entries must be finite and non-negative, got {v}"
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn populated_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn is_complete(&self) -> bool {
        self.rows.len() == self.size
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn get(&self, k: usize, j: usize) -> Option<f64> {
        self.rows.get(k).and_then(|r| r.get(j)).copied()
    }

    /// Final-stage MAE of every experience.
    pub fn last_row(&self) -> Option<&[f64]> {
        self.rows.last().map(Vec::as_slice)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            size: self.size,
            rows: self
                .rows
                .iter()
                .map(|r| r.iter().map(|v| v * factor).collect())
                .collect(),
        }
    }

    fn entry(&self, k: usize, j: usize) -> Result<f64> {
        self.get(k, j).ok_or_else(|| {
            CoreError::Argument(format!(
                "entry ({k}, {j}) is not populated ({} rows)",
                self.rows.len()
            ))
        })
    }
}

/// `MAE[k][j] - min over l in j..k of MAE[l][j]`, for `j < k`.
///
/// Signed: a negative value means the later training improved experience `j`.
pub fn forgetting(matrix: &EvalMatrix, k: usize, j: usize) -> Result<f64> {
    if j >= k {
        return Err(CoreError::Argument(format!(
            "forgetting needs j < k, got j = {j}, k = {k}"
        )));
    }
    let current = matrix.entry(k, j)?;
    let mut best = f64::INFINITY;
    for l in j..k {
        best = best.min(matrix.entry(l, j)?);
    }
    Ok(current - best)
}

/// Forgetting on `j` relative to the error when `j` was first learned.
pub fn forgetting_ratio(matrix: &EvalMatrix, k: usize, j: usize) -> Result<f64> {
    let f = forgetting(matrix, k, j)?;
    let first = matrix.entry(j, j)?;
    if first <= 0.0 {
        return Err(CoreError::Metric(format!(
            "forgetting ratio undefined: MAE of experience {j} when learned is {first}"
        )));
    }
    Ok(f / first)
}

/// Mean forgetting ratio and mean forgetting over experiences `0..k` after stage `k`.
pub fn aggregate_forgetting(matrix: &EvalMatrix, k: usize) -> Result<(f64, f64)> {
    if k == 0 {
        return Err(CoreError::Argument(
            "aggregate forgetting needs k >= 1".into(),
        ));
    }
    let mut fr = 0.0;
    let mut f = 0.0;
    for j in 0..k {
        fr += forgetting_ratio(matrix, k, j)?;
        f += forgetting(matrix, k, j)?;
    }
    Ok((fr / k as f64, f / k as f64))
}

/// Mean of row `j`: the average error over every experience seen so far.
pub fn incremental_mae(matrix: &EvalMatrix, j: usize) -> Result<f64> {
    let row = matrix.rows.get(j).ok_or_else(|| {
        CoreError::Argument(format!(
            "row {j} is not populated ({} rows)",
            matrix.rows.len()
        ))
    })?;
    Ok(row.iter().sum::<f64>() / row.len() as f64)
}

/// Lowest average forgetting ratio across trials.
pub fn best_forgetting_over_trials(avg_frs: &[f64]) -> Result<f64> {
    avg_frs
        .iter()
        .copied()
        .reduce(f64::min)
        .ok_or_else(|| CoreError::Argument("no trials to take the best forgetting from".into()))
}

/// Every derived quantity of one complete evaluation matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub final_mae: f64,
    pub final_mpe: f64,
    pub final_experience_mae: Vec<f64>,
    /// `forgetting[k][j]` for `j < k`; row 0 is empty.
    pub forgetting: Vec<Vec<f64>>,
    pub forgetting_ratio: Vec<Vec<f64>>,
    /// Average forgetting ratio after each stage `k >= 1`.
    pub avg_forgetting_ratio: Vec<f64>,
    pub avg_forgetting: Vec<f64>,
    pub incremental_mae: Vec<f64>,
}

impl MetricsReport {
    pub fn from_matrix(matrix: &EvalMatrix, final_mae: f64, final_mpe: f64) -> Result<Self> {
        if !matrix.is_complete() {
            return Err(CoreError::Argument(format!(
                "matrix has {} of {} rows",
                matrix.populated_rows(),
                matrix.size()
            )));
        }
        let n = matrix.size();
        let mut forgetting_rows = Vec::with_capacity(n);
        let mut ratio_rows = Vec::with_capacity(n);
        for k in 0..n {
            forgetting_rows.push(
                (0..k)
                    .map(|j| forgetting(matrix, k, j))
                    .collect::<Result<Vec<_>>>()?,
            );
            ratio_rows.push(
                (0..k)
                    .map(|j| forgetting_ratio(matrix, k, j))
                    .collect::<Result<Vec<_>>>()?,
            );
        }
        let (avg_fr, avg_f): (Vec<f64>, Vec<f64>) = (1..n)
            .map(|k| aggregate_forgetting(matrix, k))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .unzip();
        Ok(Self {
            final_mae,
            final_mpe,
            final_experience_mae: matrix.last_row().map(<[f64]>::to_vec).unwrap_or_default(),
            forgetting: forgetting_rows,
            forgetting_ratio: ratio_rows,
            avg_forgetting_ratio: avg_fr,
            avg_forgetting: avg_f,
            incremental_mae: (0..n)
                .map(|j| incremental_mae(matrix, j))
                .collect::<Result<_>>()?,
        })
    }

    /// Average forgetting ratio after the last stage, if the stream has at least two experiences.
    pub fn final_avg_forgetting_ratio(&self) -> Option<f64> {
        self.avg_forgetting_ratio.last().copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: &[&[f64]]) -> EvalMatrix {
        EvalMatrix::from_rows(rows.len(), rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    #[test]
    fn mae_examples() {
        assert_eq!(mae(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert_eq!(mae(&[0.0, 0.0], &[1.0, -1.0]).unwrap(), 1.0);
        assert_eq!(mae(&[1.0, 4.0], &[2.0, 2.0]).unwrap(), 1.5);
        assert!(mae(&[], &[]).is_err());
    }

    #[test]
    fn mpe_examples() {
        assert_eq!(mpe(&[2.0, 3.0], &[2.0, 3.0]).unwrap(), 0.0);
        assert_eq!(mpe(&[1.0, 5.0], &[2.0, 4.0]).unwrap(), 37.5);
        assert!(matches!(
            mpe(&[1.0, 1.0], &[1.0, 0.0]),
            Err(CoreError::Metric(_))
        ));
    }

    #[test]
    fn mpe_is_hundred_times_mae_for_unit_targets() {
        let preds = [0.5, 1.25, 2.0];
        let ones = [1.0; 3];
        assert!((mpe(&preds, &ones).unwrap() - 100.0 * mae(&preds, &ones).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn forgetting_examples() {
        assert_eq!(
            forgetting(&matrix(&[&[1.0], &[3.0, 0.5]]), 1, 0).unwrap(),
            2.0
        );
        assert_eq!(
            forgetting(&matrix(&[&[2.0], &[1.5, 0.5]]), 1, 0).unwrap(),
            -0.5
        );
        let flat = matrix(&[&[1.0], &[1.0, 2.0], &[1.0, 2.0, 3.0]]);
        assert_eq!(forgetting(&flat, 2, 0).unwrap(), 0.0);
        assert_eq!(forgetting(&flat, 2, 1).unwrap(), 0.0);
        assert!(forgetting(&flat, 1, 1).is_err());
        assert!(forgetting(&flat, 3, 0).is_err());
    }

    #[test]
    fn forgetting_ratio_examples() {
        let m = matrix(&[&[1.0], &[3.0, 0.2]]);
        assert_eq!(forgetting_ratio(&m, 1, 0).unwrap(), 2.0);
        let none = matrix(&[&[4.0], &[4.0, 0.2]]);
        assert_eq!(forgetting_ratio(&none, 1, 0).unwrap(), 0.0);
        let zero = matrix(&[&[0.0], &[1.0, 0.2]]);
        assert!(matches!(
            forgetting_ratio(&zero, 1, 0),
            Err(CoreError::Metric(_))
        ));
    }

    #[test]
    fn aggregates() {
        let m = matrix(&[&[1.0], &[3.0, 0.5]]);
        assert_eq!(aggregate_forgetting(&m, 1).unwrap(), (2.0, 2.0));
        // FR_{2,0} = 1, FR_{2,1} = 3
        let m = matrix(&[&[1.0], &[1.0, 1.0], &[2.0, 4.0, 1.0]]);
        assert_eq!(aggregate_forgetting(&m, 2).unwrap(), (2.0, 2.0));
        assert!(aggregate_forgetting(&m, 0).is_err());
        assert_eq!(incremental_mae(&m, 0).unwrap(), 1.0);
        let m2 = matrix(&[&[1.0], &[2.0, 4.0]]);
        assert_eq!(incremental_mae(&m2, 1).unwrap(), 3.0);
    }

    #[test]
    fn best_over_trials() {
        assert_eq!(best_forgetting_over_trials(&[0.5, 0.4, 0.9]).unwrap(), 0.4);
        assert_eq!(best_forgetting_over_trials(&[0.7]).unwrap(), 0.7);
        assert_eq!(best_forgetting_over_trials(&[-0.1, 0.2]).unwrap(), -0.1);
        assert!(best_forgetting_over_trials(&[]).is_err());
    }

    #[test]
    fn matrix_shape_is_enforced() {
        let mut m = EvalMatrix::new(2);
        assert!(m.push_row(vec![1.0, 2.0]).is_err());
        m.push_row(vec![1.0]).unwrap();
        assert!(m.push_row(vec![1.0, f64::NAN]).is_err());
        m.push_row(vec![1.0, 2.0]).unwrap();
        assert!(m.push_row(vec![1.0, 2.0, 3.0]).is_err());
        assert!(m.is_complete());
    }

    #[test]
    fn report_dimensions() {
        let m = matrix(&[&[1.0], &[2.0, 1.0], &[3.0, 2.0, 1.0]]);
        let r = MetricsReport::from_matrix(&m, 1.5, 10.0).unwrap();
        assert_eq!(
            r.forgetting.iter().map(Vec::len).collect::<Vec<_>>(),
            vec![0, 1, 2]
        );
        assert_eq!(r.avg_forgetting_ratio.len(), 2);
        assert_eq!(r.incremental_mae, vec![1.0, 1.5, 2.0]);
        assert_eq!(r.final_experience_mae, vec![3.0, 2.0, 1.0]);
        assert_eq!(r.final_avg_forgetting_ratio(), Some(1.5));
    }
}
