use serde::{Deserialize, Serialize};

use super::dist::f_upper_tail;
use crate::error::{Error, Result};

/// One-way repeated-measures ANOVA.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaResult {
    /// `inf` when the error term vanishes (see `zero_error_variance`).
    #[serde(with = "super::nonfinite")]
    pub f: f64,
    pub df_effect: usize,
    pub df_error: usize,
    pub p: f64,
    pub condition_means: Vec<f64>,
    pub ss_condition: f64,
    pub ss_subjects: f64,
    pub ss_error: f64,
    pub zero_error_variance: bool,
}

/// Checks a subjects × conditions matrix and returns `(n, k)`.
pub(crate) fn check_matrix(matrix: &[Vec<f64>]) -> Result<(usize, usize)> {
    let n = matrix.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!("need at least 2 subjects, got {n}")));
    }
    let k = matrix[0].len();
    if k < 2 {
        return Err(Error::InsufficientData(format!("need at least 2 conditions, got {k}")));
    }
    for (i, row) in matrix.iter().enumerate() {
        if row.len() != k {
            return Err(Error::InsufficientData(format!(
                "subject {i} has {} cells, expected {k}",
                row.len()
            )));
        }
        if let Some(j) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::InsufficientData(format!("missing cell at subject {i}, condition {j}")));
        }
    }
    Ok((n, k))
}

/// Within-subject ANOVA over a subjects × conditions matrix.
///
/// `SS_error = SS_total − SS_subjects − SS_condition` on
/// `(k − 1, (k − 1)(n − 1))` degrees of freedom.
pub fn rm_anova(matrix: &[Vec<f64>]) -> Result<AnovaResult> {
    let (n, k) = check_matrix(matrix)?;
    let (nf, kf) = (n as f64, k as f64);
    let grand = matrix.iter().flatten().sum::<f64>() / (nf * kf);
    let subject_means: Vec<f64> = matrix.iter().map(|r| r.iter().sum::<f64>() / kf).collect();
    let condition_means: Vec<f64> = (0..k)
        .map(|j| matrix.iter().map(|r| r[j]).sum::<f64>() / nf)
        .collect();

    let ss_total: f64 = matrix.iter().flatten().map(|v| (v - grand).powi(2)).sum();
    let ss_subjects = kf * subject_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let ss_condition = nf * condition_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let ss_error = (ss_total - ss_subjects - ss_condition).max(0.0);

    let df_effect = k - 1;
    let df_error = (k - 1) * (n - 1);
    let scale = ss_total.max(f64::MIN_POSITIVE);
    let tiny = 1e-12 * scale;

    let (f, p, zero_error_variance) = if ss_condition <= tiny {
        (0.0, 1.0, ss_error <= tiny)
    } else if ss_error <= tiny {
        (f64::INFINITY, 0.0, true)
    } else {
        let f = (ss_condition / df_effect as f64) / (ss_error / df_error as f64);
        (f, f_upper_tail(f, df_effect as f64, df_error as f64), false)
    };

    Ok(AnovaResult {
        f,
        df_effect,
        df_error,
        p,
        condition_means,
        ss_condition,
        ss_subjects,
        ss_error,
        zero_error_variance,
    })
}
