//! Analysis pipeline for session logs: accuracy and response-time tables,
//! repeated-measures ANOVA, paired t-tests with Bonferroni correction,
//! Kolmogorov–Smirnov normality checks, the per-cell spatial accuracy matrix
//! and questionnaire summaries.

pub mod analysis;
pub mod anova;
pub mod dist;
pub mod ks;
pub mod questionnaire;
pub mod report;
pub mod svg;
pub mod ttest;

use serde::{Deserialize, Serialize};

pub use analysis::{
    accuracy_by_setsize, eye_dominance_compare, fn_fp_split, rt_summary, spatial_matrix,
    target_kind_compare, AccuracyTable, DominanceGroup, EyeDominance, FnFpSplit, RtSummary,
    SetSizeRow, SetSizeTable, SpatialCell, SpatialMatrix, TargetKindCompare,
};
pub use anova::{rm_anova, AnovaResult};
pub use ks::{ks_normality, KsResult};
pub use questionnaire::{tlx_summary, QuestionnaireResponse, TlxSummary};
pub use report::{analyze, AnalysisReport, ExperimentSection};
pub use ttest::{bonferroni_pairwise, paired_ttest, PairwiseComparison, TTestResult};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n − 1); `None` below two values.
pub fn sample_sd(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m).powi(2)).sum();
    Some((ss / (xs.len() - 1) as f64).sqrt())
}

/// Mean, sample SD, range and count of one measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    /// Undefined for a single value.
    pub sd: Option<f64>,
    pub min: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(xs: &[f64]) -> Option<Summary> {
        if xs.is_empty() {
            return None;
        }
        Some(Summary {
            n: xs.len(),
            mean: mean(xs),
            sd: sample_sd(xs),
            min: xs.iter().copied().fold(f64::INFINITY, f64::min),
            max: xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }
}

/// Serializes non-finite floats as `"inf"`, `"-inf"` or `"nan"`; JSON has no
/// literal for them.
pub(crate) mod nonfinite {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("not a number: {other}"))),
            },
        }
    }
}
