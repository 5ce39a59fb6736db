use serde::{Deserialize, Serialize};

use super::anova::check_matrix;
use super::dist::t_two_tailed;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub t: f64,
    pub df: usize,
    /// Two-tailed.
    pub p: f64,
    pub mean_diff: f64,
    pub sd_diff: f64,
}

/// Paired-samples t-test of `a − b`.
pub fn paired_ttest(a: &[f64], b: &[f64]) -> Result<TTestResult> {
    if a.len() != b.len() {
        return Err(Error::InsufficientData(format!(
            "paired samples differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!("need at least 2 pairs, got {n}")));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::InsufficientData("non-finite value in paired samples".into()));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean_diff = super::mean(&d);
    let sd_diff = super::sample_sd(&d).expect("n >= 2");
    let df = n - 1;
    let scale = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if sd_diff <= 1e-12 * scale.max(f64::MIN_POSITIVE) {
        if mean_diff == 0.0 {
            return Ok(TTestResult {
                t: 0.0,
                df,
                p: 1.0,
                mean_diff,
                sd_diff: 0.0,
            });
        }
        return Err(Error::ZeroVariance(format!(
            "all paired differences equal {mean_diff}"
        )));
    }
    let t = mean_diff / (sd_diff / (n as f64).sqrt());
    Ok(TTestResult {
        t,
        df,
        p: t_two_tailed(t, df as f64),
        mean_diff,
        sd_diff,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseComparison {
    /// Condition indices compared (`a < b`).
    pub a: usize,
    pub b: usize,
    pub t: f64,
    pub df: usize,
    pub p_raw: f64,
    /// `min(1, p_raw · m)` over the `m = k(k−1)/2` comparisons.
    pub p_corrected: f64,
}

/// All pairwise paired t-tests between condition columns, Bonferroni
/// corrected.
pub fn bonferroni_pairwise(matrix: &[Vec<f64>]) -> Result<Vec<PairwiseComparison>> {
    let (_, k) = check_matrix(matrix)?;
    let m = (k * (k - 1) / 2) as f64;
    let column = |j: usize| matrix.iter().map(|r| r[j]).collect::<Vec<_>>();
    let mut out = Vec::new();
    for a in 0..k {
        for b in a + 1..k {
            let r = paired_ttest(&column(a), &column(b))?;
            out.push(PairwiseComparison {
                a,
                b,
                t: r.t,
                df: r.df,
                p_raw: r.p,
                p_corrected: (r.p * m).min(1.0),
            });
        }
    }
    Ok(out)
}
