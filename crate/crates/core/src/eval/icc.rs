use serde::{Deserialize, Serialize};

use super::EvalError;

/// Targets (rows) by judges (columns).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct RatingsMatrix {
    rows: Vec<Vec<f64>>,
}

impl TryFrom<Vec<Vec<f64>>> for RatingsMatrix {
    type Error = EvalError;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self, Self::Error> {
        Self::new(rows)
    }
}

impl From<RatingsMatrix> for Vec<Vec<f64>> {
    fn from(m: RatingsMatrix) -> Self {
        m.rows
    }
}

impl RatingsMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self, EvalError> {
        let k = rows.first().map_or(0, Vec::len);
        if rows.len() < 2 || k < 2 {
            return Err(EvalError::InvalidMatrix(format!(
                "need at least 2 targets and 2 judges, got {}x{k}",
                rows.len()
            )));
        }
        if rows.iter().any(|r| r.len() != k) {
            return Err(EvalError::InvalidMatrix("rows differ in length".into()));
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(EvalError::InvalidMatrix("non-finite rating".into()));
        }
        Ok(Self { rows })
    }

    /// Builds from judge columns.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self, EvalError> {
        let n = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != n) {
            return Err(EvalError::InvalidMatrix("columns differ in length".into()));
        }
        Self::new((0..n).map(|i| columns.iter().map(|c| c[i]).collect()).collect())
    }

    pub fn targets(&self) -> usize {
        self.rows.len()
    }

    pub fn judges(&self) -> usize {
        self.rows[0].len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IccForm {
    /// ICC(1,1): one-way random effects.
    OneWay,
    /// ICC(2,1): two-way random effects, absolute agreement.
    #[default]
    TwoWayAgreement,
    /// ICC(3,1): two-way mixed effects, consistency.
    TwoWayConsistency,
}

impl std::str::FromStr for IccForm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "1,1" | "one-way" => Ok(Self::OneWay),
            "2,1" | "two-way-agreement" => Ok(Self::TwoWayAgreement),
            "3,1" | "two-way-consistency" => Ok(Self::TwoWayConsistency),
            other => Err(format!("unknown ICC form {other:?}")),
        }
    }
}

/// Mean squares of the two-way decomposition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanSquares {
    pub rows: f64,
    pub columns: f64,
    pub error: f64,
    pub within: f64,
}

pub fn mean_squares(m: &RatingsMatrix) -> MeanSquares {
    let n = m.targets() as f64;
    let k = m.judges() as f64;
    let grand = m.rows.iter().flatten().sum::<f64>() / (n * k);
    let row_means: Vec<f64> = m.rows.iter().map(|r| r.iter().sum::<f64>() / k).collect();
    let col_means: Vec<f64> = (0..m.judges())
        .map(|j| m.rows.iter().map(|r| r[j]).sum::<f64>() / n)
        .collect();
    let ss_total: f64 = m.rows.iter().flatten().map(|v| (v - grand).powi(2)).sum();
    let ss_rows = k * row_means.iter().map(|r| (r - grand).powi(2)).sum::<f64>();
    let ss_cols = n * col_means.iter().map(|c| (c - grand).powi(2)).sum::<f64>();
    let ss_error = (ss_total - ss_rows - ss_cols).max(0.0);
    MeanSquares {
        rows: ss_rows / (n - 1.0),
        columns: ss_cols / (k - 1.0),
        error: ss_error / ((n - 1.0) * (k - 1.0)),
        within: (ss_total - ss_rows).max(0.0) / (n * (k - 1.0)),
    }
}

/// ICC(2,1).
pub fn compute_icc(m: &RatingsMatrix) -> Result<f64, EvalError> {
    compute_icc_with(m, IccForm::default())
}

pub fn compute_icc_with(m: &RatingsMatrix, form: IccForm) -> Result<f64, EvalError> {
    let n = m.targets() as f64;
    let k = m.judges() as f64;
    let ms = mean_squares(m);
    let (num, den) = match form {
        IccForm::OneWay => (ms.rows - ms.within, ms.rows + (k - 1.0) * ms.within),
        IccForm::TwoWayAgreement => (
            ms.rows - ms.error,
            ms.rows + (k - 1.0) * ms.error + k * (ms.columns - ms.error) / n,
        ),
        IccForm::TwoWayConsistency => (ms.rows - ms.error, ms.rows + (k - 1.0) * ms.error),
    };
    let scale = m.rows.iter().flatten().fold(1.0_f64, |a, v| a.max(v.abs()));
    if den.abs() <= 1e-12 * scale * scale {
        // Nothing varies. Identical judges agree perfectly by definition.
        let identical = m.rows.iter().all(|r| r.iter().all(|v| (v - r[0]).abs() <= 1e-12 * scale));
        return if identical {
            Ok(1.0)
        } else {
            Err(EvalError::DegenerateMatrix("ratings have no variance to apportion".into()))
        };
    }
    Ok(num / den)
}
