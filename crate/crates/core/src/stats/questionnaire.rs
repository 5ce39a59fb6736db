use serde::{Deserialize, Serialize};

use super::Summary;
use crate::error::{Error, Result};

pub const TLX_SUBSCALES: [&str; 6] = [
    "mental_demand",
    "physical_demand",
    "temporal_demand",
    "performance",
    "effort",
    "frustration",
];

/// NASA-TLX raw ratings, 0 to 100 in steps of 5.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NasaTlx {
    pub mental_demand: u8,
    pub physical_demand: u8,
    pub temporal_demand: u8,
    pub performance: u8,
    pub effort: u8,
    pub frustration: u8,
}

impl NasaTlx {
    pub fn values(&self) -> [u8; 6] {
        [
            self.mental_demand,
            self.physical_demand,
            self.temporal_demand,
            self.performance,
            self.effort,
            self.frustration,
        ]
    }
}

/// The three 7-point items (0 to 6).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Likert {
    pub clearness: u8,
    pub decision_making: u8,
    pub focus: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuestionnaireResponse {
    pub nasa_tlx: NasaTlx,
    pub likert: Likert,
    pub headache: bool,
}

impl QuestionnaireResponse {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in TLX_SUBSCALES.iter().zip(self.nasa_tlx.values()) {
            if v > 100 || v % 5 != 0 {
                return Err(Error::Questionnaire {
                    field: format!("nasa_tlx.{name}"),
                    reason: format!("{v} is not a multiple of 5 in 0..=100"),
                });
            }
        }
        let l = &self.likert;
        for (name, v) in [
            ("clearness", l.clearness),
            ("decision_making", l.decision_making),
            ("focus", l.focus),
        ] {
            if v > 6 {
                return Err(Error::Questionnaire {
                    field: format!("likert.{name}"),
                    reason: format!("{v} is outside 0..=6"),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TlxSummary {
    pub n: usize,
    /// In `TLX_SUBSCALES` order.
    pub subscales: Vec<(String, Summary)>,
    pub likert: Vec<(String, Summary)>,
    pub headache_count: usize,
}

pub fn tlx_summary(responses: &[QuestionnaireResponse]) -> Result<TlxSummary> {
    if responses.is_empty() {
        return Err(Error::InsufficientData("no questionnaire responses".into()));
    }
    for r in responses {
        r.validate()?;
    }
    let column = |f: &dyn Fn(&QuestionnaireResponse) -> u8| {
        let xs: Vec<f64> = responses.iter().map(|r| f(r) as f64).collect();
        Summary::of(&xs).expect("non-empty")
    };
    let subscales = TLX_SUBSCALES
        .iter()
        .enumerate()
        .map(|(i, name)| (name.to_string(), column(&|r| r.nasa_tlx.values()[i])))
        .collect();
    let likert = vec![
        ("clearness".to_string(), column(&|r| r.likert.clearness)),
        ("decision_making".to_string(), column(&|r| r.likert.decision_making)),
        ("focus".to_string(), column(&|r| r.likert.focus)),
    ];
    Ok(TlxSummary {
        n: responses.len(),
        subscales,
        likert,
        headache_count: responses.iter().filter(|r| r.headache).count(),
    })
}
