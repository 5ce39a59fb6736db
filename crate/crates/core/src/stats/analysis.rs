use serde::{Deserialize, Serialize};

use super::ttest::{paired_ttest, TTestResult};
use super::Summary;
use crate::error::{Error, Result};
use crate::protocol::TrialRecord;
use crate::scene::{ConjunctionTarget, Experiment, Eye};
use crate::session::SessionLog;

pub const MATRIX_ROWS: usize = 5;
pub const MATRIX_COLS: usize = 6;

/// Recorded logs of a single experiment.
fn recorded(logs: &[SessionLog]) -> Result<(Experiment, Vec<&SessionLog>)> {
    let rec: Vec<&SessionLog> = logs.iter().filter(|l| l.is_recorded()).collect();
    let Some(first) = rec.first() else {
        return Err(Error::InsufficientData("no recorded session logs".into()));
    };
    let experiment = first.experiment();
    if rec.iter().any(|l| l.experiment() != experiment) {
        return Err(Error::InsufficientData(
            "logs mix preattentive and conjunction sessions".into(),
        ));
    }
    Ok((experiment, rec))
}

fn answered(log: &SessionLog) -> impl Iterator<Item = &TrialRecord> {
    log.trials.iter().filter(|t| t.response.is_some())
}

fn hit_rate<'a>(trials: impl Iterator<Item = &'a TrialRecord>) -> Option<f64> {
    let (mut ok, mut n) = (0usize, 0usize);
    for t in trials {
        n += 1;
        if t.correct == Some(true) {
            ok += 1;
        }
    }
    (n > 0).then(|| ok as f64 / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetSizeRow {
    pub set_size: usize,
    pub n_subjects: usize,
    /// NaN (serialized as "nan") when no subject has data.
    #[serde(with = "super::nonfinite")]
    pub mean: f64,
    pub sd: Option<f64>,
}

fn setsize_rows(set_sizes: &[usize], matrix: &[Vec<f64>]) -> Vec<SetSizeRow> {
    set_sizes
        .iter()
        .enumerate()
        .map(|(j, &set_size)| {
            let xs: Vec<f64> = matrix.iter().map(|r| r[j]).filter(|v| v.is_finite()).collect();
            let s = Summary::of(&xs);
            SetSizeRow {
                set_size,
                n_subjects: xs.len(),
                mean: s.as_ref().map_or(f64::NAN, |s| s.mean),
                sd: s.and_then(|s| s.sd),
            }
        })
        .collect()
}

/// A per-subject measure for each set size plus its cross-subject summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetSizeTable {
    pub experiment: Experiment,
    pub rows: Vec<SetSizeRow>,
    pub subjects: Vec<String>,
    /// Subjects × set sizes; NaN where a subject has no trial of that size.
    #[serde(skip)]
    pub matrix: Vec<Vec<f64>>,
}

impl SetSizeTable {
    fn build(
        experiment: Experiment,
        rec: &[&SessionLog],
        cell: impl Fn(&SessionLog, usize) -> Option<f64>,
    ) -> Self {
        let sizes = experiment.set_sizes();
        let matrix: Vec<Vec<f64>> = rec
            .iter()
            .map(|log| sizes.iter().map(|&s| cell(log, s).unwrap_or(f64::NAN)).collect())
            .collect();
        SetSizeTable {
            experiment,
            rows: setsize_rows(sizes, &matrix),
            subjects: rec.iter().map(|l| l.participant().id.clone()).collect(),
            matrix,
        }
    }

    /// True when every subject has a value for every set size.
    pub fn is_complete(&self) -> bool {
        self.matrix.iter().flatten().all(|v| v.is_finite())
    }

    pub fn means(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.mean).collect()
    }
}

pub type AccuracyTable = SetSizeTable;

/// Per-subject accuracy for each set size, then mean and SD across subjects.
pub fn accuracy_by_setsize(logs: &[SessionLog]) -> Result<AccuracyTable> {
    let (experiment, rec) = recorded(logs)?;
    Ok(SetSizeTable::build(experiment, &rec, |log, s| {
        hit_rate(answered(log).filter(|t| t.condition.set_size == s))
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RtSummary {
    /// Mean RT over all answered trials.
    pub all: SetSizeTable,
    /// Mean RT over correct trials only.
    pub correct: SetSizeTable,
}

/// Per-subject mean reaction time (ms) for each set size.
pub fn rt_summary(logs: &[SessionLog]) -> Result<RtSummary> {
    let (experiment, rec) = recorded(logs)?;
    let mean_rt = |log: &SessionLog, s: usize, only_correct: bool| {
        let xs: Vec<f64> = answered(log)
            .filter(|t| t.condition.set_size == s)
            .filter(|t| !only_correct || t.correct == Some(true))
            .filter_map(|t| t.reaction_ms)
            .collect();
        (!xs.is_empty()).then(|| super::mean(&xs))
    };
    Ok(RtSummary {
        all: SetSizeTable::build(experiment, &rec, |l, s| mean_rt(l, s, false)),
        correct: SetSizeTable::build(experiment, &rec, |l, s| mean_rt(l, s, true)),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FnFpSplit {
    /// Mean over subjects of misses / errors.
    pub fn_share: f64,
    /// `1 − fn_share`.
    pub fp_share: f64,
    /// SD of the per-subject shares (identical for both).
    pub sd: Option<f64>,
    pub n_subjects: usize,
    /// Subjects without a single error.
    pub excluded: Vec<String>,
    /// Paired t-test of false-positive against false-negative shares.
    pub ttest: Option<TTestResult>,
}

/// Splits each subject's errors into misses and false alarms.
pub fn fn_fp_split(logs: &[SessionLog]) -> Result<FnFpSplit> {
    let (_, rec) = recorded(logs)?;
    let mut fn_shares = Vec::new();
    let mut excluded = Vec::new();
    for log in &rec {
        let misses = log.trials.iter().filter(|t| t.is_miss()).count();
        let fas = log.trials.iter().filter(|t| t.is_false_alarm()).count();
        if misses + fas == 0 {
            excluded.push(log.participant().id.clone());
        } else {
            fn_shares.push(misses as f64 / (misses + fas) as f64);
        }
    }
    if fn_shares.is_empty() {
        return Err(Error::InsufficientData("no subject made an error".into()));
    }
    let fn_share = super::mean(&fn_shares);
    let fp_shares: Vec<f64> = fn_shares.iter().map(|s| 1.0 - s).collect();
    let ttest = if fn_shares.len() >= 2 {
        paired_ttest(&fp_shares, &fn_shares).ok()
    } else {
        None
    };
    Ok(FnFpSplit {
        fn_share,
        fp_share: 1.0 - fn_share,
        sd: super::sample_sd(&fn_shares),
        n_subjects: fn_shares.len(),
        excluded,
        ttest,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialCell {
    pub hits: usize,
    pub opportunities: usize,
    /// `None` when the cell never held a target.
    pub rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialMatrix {
    pub rows: usize,
    pub cols: usize,
    /// Row-major, row 0 at the top of the screen.
    pub cells: Vec<Vec<SpatialCell>>,
}

impl SpatialMatrix {
    pub fn get(&self, row: usize, col: usize) -> Option<&SpatialCell> {
        self.cells.get(row)?.get(col)
    }

    pub fn total_opportunities(&self) -> usize {
        self.cells.iter().flatten().map(|c| c.opportunities).sum()
    }
}

/// Hit rate per grid cell over answered trials whose target was shown to one
/// eye only.
pub fn spatial_matrix(logs: &[SessionLog]) -> SpatialMatrix {
    let trials: Vec<&TrialRecord> = logs
        .iter()
        .filter(|l| l.is_recorded())
        .flat_map(|l| answered(l))
        .filter(|t| t.condition.target_is_monocular())
        .filter(|t| t.target_cell.is_some())
        .collect();
    let rows = trials
        .iter()
        .map(|t| t.target_cell.unwrap().row as usize + 1)
        .fold(MATRIX_ROWS, usize::max);
    let cols = trials
        .iter()
        .map(|t| t.target_cell.unwrap().col as usize + 1)
        .fold(MATRIX_COLS, usize::max);
    let mut counts = vec![vec![(0usize, 0usize); cols]; rows];
    for t in trials {
        let c = t.target_cell.unwrap();
        let slot = &mut counts[c.row as usize][c.col as usize];
        slot.1 += 1;
        if t.correct == Some(true) {
            slot.0 += 1;
        }
    }
    let cells = counts
        .into_iter()
        .map(|row| {
            row.into_iter()
                .map(|(hits, opportunities)| SpatialCell {
                    hits,
                    opportunities,
                    rate: (opportunities > 0).then(|| hits as f64 / opportunities as f64),
                })
                .collect()
        })
        .collect();
    SpatialMatrix { rows, cols, cells }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceGroup {
    pub dominant_eye: Eye,
    pub n_subjects: usize,
    pub dominant: Option<Summary>,
    pub non_dominant: Option<Summary>,
    /// Paired t of dominant-eye against non-dominant-eye accuracy.
    pub ttest: Option<TTestResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EyeDominance {
    /// One entry per dominant eye present in the cohort.
    pub groups: Vec<DominanceGroup>,
    /// Subjects with no recorded dominant eye.
    pub unknown: Vec<String>,
}

impl EyeDominance {
    /// The group with the most subjects (ties go to the right eye).
    pub fn largest(&self) -> Option<&DominanceGroup> {
        self.groups
            .iter()
            .max_by_key(|g| (g.n_subjects, g.dominant_eye == Eye::Right))
    }
}

/// Target-present accuracy split by whether the eye that saw the target was
/// the subject's dominant eye, within each dominant-eye group.
pub fn eye_dominance_compare(logs: &[SessionLog]) -> Result<EyeDominance> {
    let (_, rec) = recorded(logs)?;
    let mut unknown = Vec::new();
    let mut groups = Vec::new();
    for eye in [Eye::Left, Eye::Right] {
        let mut dom = Vec::new();
        let mut non = Vec::new();
        let mut n_subjects = 0;
        for log in &rec {
            if log.participant().dominant_eye != Some(eye) {
                continue;
            }
            n_subjects += 1;
            let monocular = || answered(log).filter(|t| t.condition.target_is_monocular());
            let d = hit_rate(monocular().filter(|t| t.condition.target_eye == Some(eye)));
            let o = hit_rate(monocular().filter(|t| t.condition.target_eye == Some(eye.other())));
            if let (Some(d), Some(o)) = (d, o) {
                dom.push(d);
                non.push(o);
            }
        }
        if n_subjects == 0 {
            continue;
        }
        let ttest = if dom.len() >= 2 {
            paired_ttest(&dom, &non).ok()
        } else {
            None
        };
        groups.push(DominanceGroup {
            dominant_eye: eye,
            n_subjects,
            dominant: Summary::of(&dom),
            non_dominant: Summary::of(&non),
            ttest,
        });
    }
    for log in &rec {
        if log.participant().dominant_eye.is_none() {
            unknown.push(log.participant().id.clone());
        }
    }
    if groups.is_empty() {
        return Err(Error::InsufficientData("no subject has a recorded dominant eye".into()));
    }
    Ok(EyeDominance { groups, unknown })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetKindCompare {
    pub magenta: Summary,
    pub yellow: Summary,
    /// Paired t of magenta against yellow target accuracy.
    pub ttest: Option<TTestResult>,
}

/// Conjunction only: hit rate for the monocular magenta target against the
/// unmodified yellow target.
pub fn target_kind_compare(logs: &[SessionLog]) -> Result<TargetKindCompare> {
    let (experiment, rec) = recorded(logs)?;
    if experiment != Experiment::Conjunction {
        return Err(Error::InsufficientData(
            "target kinds exist only in conjunction sessions".into(),
        ));
    }
    let (mut mag, mut yel) = (Vec::new(), Vec::new());
    for log in &rec {
        let kind = |k| {
            hit_rate(answered(log).filter(move |t| t.condition.conjunction_target_kind == Some(k)))
        };
        if let (Some(m), Some(y)) = (
            kind(ConjunctionTarget::MagentaPopout),
            kind(ConjunctionTarget::YellowNonPopout),
        ) {
            mag.push(m);
            yel.push(y);
        }
    }
    let (Some(magenta), Some(yellow)) = (Summary::of(&mag), Summary::of(&yel)) else {
        return Err(Error::InsufficientData("no subject saw both target kinds".into()));
    };
    let ttest = if mag.len() >= 2 {
        paired_ttest(&mag, &yel).ok()
    } else {
        None
    };
    Ok(TargetKindCompare {
        magenta,
        yellow,
        ttest,
    })
}
