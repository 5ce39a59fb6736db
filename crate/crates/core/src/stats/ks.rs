use serde::{Deserialize, Serialize};

use super::dist::{kolmogorov_q, normal_cdf};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub n: usize,
    pub d: f64,
    pub p: f64,
}

/// One-sample Kolmogorov–Smirnov test against a normal distribution with the
/// sample's own mean and SD.
///
/// The p-value comes from the asymptotic Kolmogorov distribution of `√n·D`.
/// Estimating the parameters from the same sample makes this conservative
/// (the Lilliefors correction is not applied).
pub fn ks_normality(sample: &[f64]) -> Result<KsResult> {
    let n = sample.len();
    if n < 5 {
        return Err(Error::InsufficientData(format!("KS test needs n >= 5, got {n}")));
    }
    if sample.iter().any(|v| !v.is_finite()) {
        return Err(Error::InsufficientData("non-finite value in sample".into()));
    }
    let mean = super::mean(sample);
    let sd = super::sample_sd(sample).expect("n >= 5");
    if !(sd > 0.0) {
        return Err(Error::ZeroVariance("constant sample".into()));
    }
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let nf = n as f64;
    let d = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = normal_cdf((x - mean) / sd);
            (f - i as f64 / nf).max((i + 1) as f64 / nf - f)
        })
        .fold(0.0, f64::max);
    Ok(KsResult {
        n,
        d,
        p: kolmogorov_q(nf.sqrt() * d),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_sample_is_an_error() {
        assert!(matches!(ks_normality(&[0.5; 10]), Err(Error::ZeroVariance(_))));
        assert!(ks_normality(&[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn two_point_sample_is_not_normal() {
        let xs: Vec<f64> = (0..100).map(|i| (i % 2) as f64).collect();
        let r = ks_normality(&xs).unwrap();
        assert!(r.p < 0.05, "{r:?}");
    }
}
