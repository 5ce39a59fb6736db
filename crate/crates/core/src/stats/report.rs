use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::analysis::{
    accuracy_by_setsize, eye_dominance_compare, fn_fp_split, rt_summary, spatial_matrix,
    target_kind_compare, EyeDominance, FnFpSplit, RtSummary, SetSizeTable, SpatialMatrix,
    TargetKindCompare,
};
use super::anova::{rm_anova, AnovaResult};
use super::ks::{ks_normality, KsResult};
use super::questionnaire::{tlx_summary, TlxSummary};
use super::ttest::{bonferroni_pairwise, PairwiseComparison};
use crate::error::{Error, Result};
use crate::scene::Experiment;
use crate::session::SessionLog;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Within-subject test over one set-size table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetSizeTest {
    pub anova: AnovaResult,
    pub pairwise: Vec<PairwiseComparison>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalityCheck {
    pub measure: String,
    pub set_size: usize,
    pub ks: KsResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSection {
    pub experiment: Experiment,
    pub subjects: Vec<String>,
    pub accuracy: SetSizeTable,
    pub accuracy_test: Option<SetSizeTest>,
    pub rt: RtSummary,
    /// On per-subject mean RT over all trials.
    pub rt_test: Option<SetSizeTest>,
    pub normality: Vec<NormalityCheck>,
    pub errors: Option<FnFpSplit>,
    pub spatial: SpatialMatrix,
    pub eye_dominance: Option<EyeDominance>,
    pub target_kinds: Option<TargetKindCompare>,
    pub questionnaire: Option<TlxSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub schema_version: u32,
    pub n_logs: usize,
    pub sections: Vec<ExperimentSection>,
    pub warnings: Vec<String>,
}

fn set_size_test(
    table: &SetSizeTable,
    label: &str,
    warnings: &mut Vec<String>,
) -> Option<SetSizeTest> {
    if !table.is_complete() {
        warnings.push(format!("{label}: some subjects lack a set size; ANOVA skipped"));
        return None;
    }
    let anova = match rm_anova(&table.matrix) {
        Ok(a) => a,
        Err(e) => {
            warnings.push(format!("{label}: ANOVA skipped: {e}"));
            return None;
        }
    };
    if anova.f.is_infinite() {
        warnings.push(format!("{label}: zero error variance, F reported as infinite"));
    }
    let pairwise = match bonferroni_pairwise(&table.matrix) {
        Ok(p) => p,
        Err(e) => {
            warnings.push(format!("{label}: pairwise tests skipped: {e}"));
            Vec::new()
        }
    };
    Some(SetSizeTest { anova, pairwise })
}

fn normality(table: &SetSizeTable, measure: &str, out: &mut Vec<NormalityCheck>) {
    for (j, row) in table.rows.iter().enumerate() {
        let xs: Vec<f64> = table
            .matrix
            .iter()
            .map(|r| r[j])
            .filter(|v| v.is_finite())
            .collect();
        // Too few subjects or a constant column: nothing to test.
        if let Ok(ks) = ks_normality(&xs) {
            out.push(NormalityCheck {
                measure: measure.to_string(),
                set_size: row.set_size,
                ks,
            });
        }
    }
}

fn section(
    experiment: Experiment,
    logs: &[SessionLog],
    warnings: &mut Vec<String>,
) -> Result<ExperimentSection> {
    let name = experiment.name();
    let accuracy = accuracy_by_setsize(logs)?;
    let rt = rt_summary(logs)?;
    let accuracy_test = set_size_test(&accuracy, &format!("{name} accuracy"), warnings);
    let rt_test = set_size_test(&rt.all, &format!("{name} reaction time"), warnings);

    let mut checks = Vec::new();
    normality(&accuracy, "accuracy", &mut checks);
    normality(&rt.all, "reaction_time", &mut checks);

    let errors = match fn_fp_split(logs) {
        Ok(s) => {
            for id in &s.excluded {
                warnings.push(format!("{name}: subject {id} made no errors; excluded from FN/FP split"));
            }
            Some(s)
        }
        Err(e) => {
            warnings.push(format!("{name}: FN/FP split skipped: {e}"));
            None
        }
    };
    let eye_dominance = match eye_dominance_compare(logs) {
        Ok(d) => {
            if !d.unknown.is_empty() {
                warnings.push(format!(
                    "{name}: {} subject(s) without a recorded dominant eye",
                    d.unknown.len()
                ));
            }
            Some(d)
        }
        Err(e) => {
            warnings.push(format!("{name}: eye dominance comparison skipped: {e}"));
            None
        }
    };
    let target_kinds = match experiment {
        Experiment::Preattentive => None,
        Experiment::Conjunction => match target_kind_compare(logs) {
            Ok(c) => Some(c),
            Err(e) => {
                warnings.push(format!("{name}: target kind comparison skipped: {e}"));
                None
            }
        },
    };
    let responses: Vec<_> = logs.iter().filter_map(|l| l.questionnaire).collect();
    let questionnaire = if responses.is_empty() {
        None
    } else {
        Some(tlx_summary(&responses)?)
    };

    Ok(ExperimentSection {
        experiment,
        subjects: accuracy.subjects.clone(),
        accuracy,
        accuracy_test,
        rt,
        rt_test,
        normality: checks,
        errors,
        spatial: spatial_matrix(logs),
        eye_dominance,
        target_kinds,
        questionnaire,
    })
}

/// Runs the full analysis. Logs are ordered by participant id first, so the
/// report does not depend on the order they were loaded in.
pub fn analyze(logs: &[SessionLog]) -> Result<AnalysisReport> {
    let mut warnings = Vec::new();
    let mut sorted: Vec<SessionLog> = Vec::with_capacity(logs.len());
    for log in logs {
        log.validate()?;
        let id = &log.participant().id;
        if !log.is_recorded() {
            warnings.push(format!("{id}: training session ignored"));
            continue;
        }
        if !log.complete {
            warnings.push(format!(
                "{id}: incomplete session ({} of {} trials)",
                log.trials.len(),
                log.header.expected_trials
            ));
        }
        sorted.push(log.clone());
    }
    sorted.sort_by(|a, b| {
        (a.participant().id.as_str(), a.experiment().name())
            .cmp(&(b.participant().id.as_str(), b.experiment().name()))
    });
    let mut sections = Vec::new();
    for experiment in [Experiment::Preattentive, Experiment::Conjunction] {
        let group: Vec<SessionLog> = sorted
            .iter()
            .filter(|l| l.experiment() == experiment)
            .cloned()
            .collect();
        if group.is_empty() {
            continue;
        }
        sections.push(section(experiment, &group, &mut warnings)?);
    }
    if sections.is_empty() {
        return Err(Error::InsufficientData("no recorded session logs".into()));
    }
    Ok(AnalysisReport {
        schema_version: REPORT_SCHEMA_VERSION,
        n_logs: logs.len(),
        sections,
        warnings,
    })
}

fn opt(v: Option<f64>, prec: usize) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.prec$}"))
}

fn p_text(p: f64) -> String {
    if p < 0.001 {
        "p < .001".into()
    } else {
        format!("p = {p:.3}")
    }
}

impl AnalysisReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn section(&self, experiment: Experiment) -> Option<&ExperimentSection> {
        self.sections.iter().find(|s| s.experiment == experiment)
    }

    /// Plain-text tables.
    pub fn to_text(&self) -> String {
        let mut o = String::new();
        for s in &self.sections {
            let _ = writeln!(o, "== {} ({} subjects) ==", s.experiment.name(), s.subjects.len());
            let _ = writeln!(
                o,
                "{:>8} {:>9} {:>7} {:>10} {:>9} {:>12}",
                "set size", "accuracy", "sd", "rt all ms", "sd", "rt correct"
            );
            for (i, a) in s.accuracy.rows.iter().enumerate() {
                let r = &s.rt.all.rows[i];
                let c = &s.rt.correct.rows[i];
                let _ = writeln!(
                    o,
                    "{:>8} {:>9.3} {:>7} {:>10.0} {:>9} {:>12.0}",
                    a.set_size,
                    a.mean,
                    opt(a.sd, 3),
                    r.mean,
                    opt(r.sd, 0),
                    c.mean
                );
            }
            for (label, t) in [("accuracy", &s.accuracy_test), ("reaction time", &s.rt_test)] {
                let Some(t) = t else { continue };
                let a = &t.anova;
                let f = if a.f.is_finite() {
                    format!("{:.2}", a.f)
                } else {
                    "inf".to_string()
                };
                let _ = writeln!(
                    o,
                    "{label} ANOVA: F({},{}) = {f}, {}",
                    a.df_effect,
                    a.df_error,
                    p_text(a.p)
                );
                for c in &t.pairwise {
                    let _ = writeln!(
                        o,
                        "  {} vs {}: t({}) = {:.2}, Bonferroni {}",
                        s.accuracy.rows[c.a].set_size,
                        s.accuracy.rows[c.b].set_size,
                        c.df,
                        c.t,
                        p_text(c.p_corrected)
                    );
                }
            }
            if let Some(e) = &s.errors {
                let _ = write!(
                    o,
                    "errors: false negatives {:.2}, false positives {:.2} (sd {})",
                    e.fn_share,
                    e.fp_share,
                    opt(e.sd, 2)
                );
                if let Some(t) = &e.ttest {
                    let _ = write!(o, ", t({}) = {:.2}, {}", t.df, t.t, p_text(t.p));
                }
                let _ = writeln!(o);
            }
            if let Some(d) = &s.eye_dominance {
                for g in &d.groups {
                    let _ = write!(
                        o,
                        "{:?}-dominant (n = {}): dominant {} vs non-dominant {}",
                        g.dominant_eye,
                        g.n_subjects,
                        opt(g.dominant.as_ref().map(|x| x.mean), 2),
                        opt(g.non_dominant.as_ref().map(|x| x.mean), 2)
                    );
                    if let Some(t) = &g.ttest {
                        let _ = write!(o, ", t({}) = {:.2}, {}", t.df, t.t, p_text(t.p));
                    }
                    let _ = writeln!(o);
                }
            }
            if let Some(k) = &s.target_kinds {
                let _ = write!(
                    o,
                    "target kind: magenta {:.2} vs yellow {:.2}",
                    k.magenta.mean, k.yellow.mean
                );
                if let Some(t) = &k.ttest {
                    let _ = write!(o, ", t({}) = {:.2}, {}", t.df, t.t, p_text(t.p));
                }
                let _ = writeln!(o);
            }
            let _ = writeln!(o, "spatial hit rate (monocular targets):");
            for row in &s.spatial.cells {
                let cells: Vec<String> = row
                    .iter()
                    .map(|c| format!("{:>6}", opt(c.rate, 2)))
                    .collect();
                let _ = writeln!(o, "  {}", cells.join(""));
            }
            if let Some(q) = &s.questionnaire {
                let _ = writeln!(o, "questionnaire (n = {}):", q.n);
                for (name, x) in q.subscales.iter().chain(&q.likert) {
                    let _ = writeln!(
                        o,
                        "  {name:<16} M = {:.2}, SD = {}, range {}-{}",
                        x.mean,
                        opt(x.sd, 2),
                        x.min,
                        x.max
                    );
                }
                let _ = writeln!(o, "  headache: {}", q.headache_count);
            }
            let _ = writeln!(o);
        }
        for w in &self.warnings {
            let _ = writeln!(o, "warning: {w}");
        }
        o
    }
}
