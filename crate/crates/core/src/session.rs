//! Session logs and the offline session driver.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::{
    Effect, Event, PhaseEntry, Protocol, ScheduledTrial, SessionMode, StrayInput, TimingConfig,
    TrialRecord,
};
use crate::scene::{ConjunctionTarget, Experiment, Eye};
use crate::schema;
use crate::stats::questionnaire::QuestionnaireResponse;
use crate::stimgen::{instantiate_trial, TrialPlan};

pub const LOG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Participant {
    pub id: String,
    #[serde(default)]
    pub age: Option<u32>,
    #[serde(default)]
    pub dominant_eye: Option<Eye>,
    #[serde(default = "default_true")]
    pub vision_normal: bool,
    #[serde(default)]
    pub demographics: BTreeMap<String, String>,
}

fn default_true() -> bool {
    true
}

impl Participant {
    pub fn anonymous(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            age: None,
            dominant_eye: None,
            vision_normal: true,
            demographics: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionHeader {
    pub schema_version: u32,
    pub participant: Participant,
    pub mode: SessionMode,
    pub experiment: Experiment,
    #[serde(default)]
    pub plan_seed: Option<u64>,
    pub expected_trials: usize,
    #[serde(default)]
    pub timing: TimingConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionLog {
    pub header: SessionHeader,
    pub trials: Vec<TrialRecord>,
    pub stray_inputs: Vec<StrayInput>,
    pub questionnaire: Option<QuestionnaireResponse>,
    pub complete: bool,
}

/// One line of the JSON-lines log format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogLine {
    Header(SessionHeader),
    Trial(TrialRecord),
    Stray(StrayInput),
    Questionnaire(QuestionnaireResponse),
    Footer { complete: bool },
}

/// Parses one log line. Dispatching on `kind` by hand (rather than through
/// serde's internally tagged enums) keeps field paths in error messages.
pub fn parse_log_line(line: &str, source_name: &str) -> Result<LogLine> {
    let mut value: serde_json::Value = schema::parse_json(line, source_name)?;
    let kind = value
        .as_object_mut()
        .and_then(|o| o.remove("kind"))
        .and_then(|k| k.as_str().map(str::to_owned));
    let Some(kind) = kind else {
        return Err(Error::Schema {
            source_name: source_name.into(),
            path: "kind".into(),
            message: "missing or non-string `kind`".into(),
        });
    };
    Ok(match kind.as_str() {
        "header" => LogLine::Header(schema::from_value(value, source_name)?),
        "trial" => LogLine::Trial(schema::from_value(value, source_name)?),
        "stray" => LogLine::Stray(schema::from_value(value, source_name)?),
        "questionnaire" => LogLine::Questionnaire(schema::from_value(value, source_name)?),
        "footer" => {
            #[derive(Deserialize)]
            struct Footer {
                complete: bool,
            }
            let f: Footer = schema::from_value(value, source_name)?;
            LogLine::Footer {
                complete: f.complete,
            }
        }
        other => {
            return Err(Error::Schema {
                source_name: source_name.into(),
                path: "kind".into(),
                message: format!("unknown line kind `{other}`"),
            })
        }
    })
}

impl SessionLog {
    pub fn participant(&self) -> &Participant {
        &self.header.participant
    }

    pub fn experiment(&self) -> Experiment {
        self.header.experiment
    }

    pub fn is_recorded(&self) -> bool {
        self.header.mode == SessionMode::Recorded
    }

    pub fn validate(&self) -> Result<()> {
        if self.header.schema_version > LOG_SCHEMA_VERSION {
            return Err(Error::Schema {
                source_name: "session log".into(),
                path: "header.schema_version".into(),
                message: format!("unsupported version {}", self.header.schema_version),
            });
        }
        for (i, t) in self.trials.iter().enumerate() {
            t.validate().map_err(|e| Error::Schema {
                source_name: "session log".into(),
                path: format!("trials[{i}]"),
                message: e.to_string(),
            })?;
        }
        if self.is_recorded() && self.complete && self.trials.len() != self.header.expected_trials {
            return Err(Error::Schema {
                source_name: "session log".into(),
                path: "trials".into(),
                message: format!(
                    "complete recorded session has {} trials, expected {}",
                    self.trials.len(),
                    self.header.expected_trials
                ),
            });
        }
        if let Some(q) = &self.questionnaire {
            q.validate()?;
        }
        Ok(())
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        let mut line = |l: &LogLine| -> Result<()> {
            serde_json::to_writer(&mut w, l)?;
            w.write_all(b"\n").map_err(|e| Error::io("<log>", e))
        };
        line(&LogLine::Header(self.header.clone()))?;
        for t in &self.trials {
            line(&LogLine::Trial(t.clone()))?;
        }
        for s in &self.stray_inputs {
            line(&LogLine::Stray(*s))?;
        }
        if let Some(q) = &self.questionnaire {
            line(&LogLine::Questionnaire(q.clone()))?;
        }
        line(&LogLine::Footer {
            complete: self.complete,
        })
    }

    pub fn to_jsonl_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf)?;
        Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_jsonl(std::io::BufWriter::new(f))
    }

    /// Parse a JSON-lines log. Without a footer line, the session counts as
    /// complete once it holds the expected number of trials.
    pub fn read_jsonl<R: BufRead>(reader: R, source_name: &str) -> Result<SessionLog> {
        let mut header = None;
        let mut trials = Vec::new();
        let mut strays = Vec::new();
        let mut questionnaire = None;
        let mut footer = None;
        for (n, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io(source_name, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed = parse_log_line(&line, &format!("{source_name}:{}", n + 1))?;
            match parsed {
                LogLine::Header(h) if header.is_none() => header = Some(h),
                LogLine::Header(_) => {
                    return Err(Error::Schema {
                        source_name: format!("{source_name}:{}", n + 1),
                        path: "kind".into(),
                        message: "duplicate header".into(),
                    })
                }
                LogLine::Trial(t) => trials.push(t),
                LogLine::Stray(s) => strays.push(s),
                LogLine::Questionnaire(q) => questionnaire = Some(q),
                LogLine::Footer { complete } => footer = Some(complete),
            }
        }
        let header = header.ok_or_else(|| Error::Schema {
            source_name: source_name.into(),
            path: "header".into(),
            message: "missing header line".into(),
        })?;
        let complete = footer.unwrap_or(trials.len() == header.expected_trials);
        let log = SessionLog {
            header,
            trials,
            stray_inputs: strays,
            questionnaire,
            complete,
        };
        log.validate().map_err(|e| match e {
            Error::Schema { path, message, .. } => Error::Schema {
                source_name: source_name.into(),
                path,
                message,
            },
            other => other,
        })?;
        Ok(log)
    }

    pub fn load(path: &Path) -> Result<SessionLog> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_jsonl(std::io::BufReader::new(f), &path.display().to_string())
    }

    /// Flat per-trial CSV export.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "trial", "block", "set_size", "present", "eye", "kind", "response", "correct", "rt_ms",
            "target_row", "target_col",
        ])?;
        let opt = |v: Option<String>| v.unwrap_or_default();
        for t in &self.trials {
            let c = &t.condition;
            out.write_record([
                t.trial_index.to_string(),
                t.block.to_string(),
                c.set_size.to_string(),
                c.target_present.to_string(),
                opt(c.target_eye.map(|e| format!("{e:?}").to_lowercase())),
                opt(c.conjunction_target_kind.map(|k| match k {
                    ConjunctionTarget::MagentaPopout => "magenta_popout".to_string(),
                    ConjunctionTarget::YellowNonPopout => "yellow_non_popout".to_string(),
                })),
                opt(t.response.map(|r| r.to_string())),
                opt(t.correct.map(|r| r.to_string())),
                opt(t.reaction_ms.map(|r| format!("{r:.3}"))),
                opt(t.target_cell.map(|c| c.row.to_string())),
                opt(t.target_cell.map(|c| c.col.to_string())),
            ])?;
        }
        out.flush().map_err(|e| Error::io("<csv>", e))
    }
}

/// Load every `*.jsonl` log in a directory, sorted by file name.
pub fn load_log_dir(dir: &Path) -> Result<Vec<SessionLog>> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    paths.sort();
    paths.iter().map(|p| SessionLog::load(p)).collect()
}

/// Instantiate every plan trial once to learn its target cell and eccentricity.
pub fn schedule(plan: &TrialPlan) -> Result<Vec<ScheduledTrial>> {
    plan.trials()
        .enumerate()
        .map(|(i, (block, t))| {
            let stim = instantiate_trial(plan, i)?;
            let target = stim.target();
            Ok(ScheduledTrial {
                index: t.index,
                block,
                condition: t.condition.clone(),
                layout_seed: t.layout_seed,
                target_cell: target.and_then(|d| d.cell),
                target_eccentricity_deg: target.map(|d| d.center.eccentricity()),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub answer: bool,
    pub rt_ms: f64,
}

/// Source of yes/no answers: a human front end or a simulated observer.
pub trait Responder {
    /// `None` when the responder has nothing more to give.
    fn respond(&mut self, trial: &ScheduledTrial) -> Option<Response>;
}

impl<F: FnMut(&ScheduledTrial) -> Option<Response>> Responder for F {
    fn respond(&mut self, trial: &ScheduledTrial) -> Option<Response> {
        self(trial)
    }
}

pub trait TickSource {
    fn next_tick(&mut self) -> Option<f64>;
}

/// Ticks at exact multiples of the frame period, optionally finite.
#[derive(Debug, Clone)]
pub struct FrameClock {
    hz: f64,
    frame: u64,
    limit: Option<u64>,
}

impl FrameClock {
    pub fn new(hz: f64) -> Self {
        Self {
            hz,
            frame: 0,
            limit: None,
        }
    }

    pub fn with_limit(hz: f64, frames: u64) -> Self {
        Self {
            hz,
            frame: 0,
            limit: Some(frames),
        }
    }
}

impl TickSource for FrameClock {
    fn next_tick(&mut self) -> Option<f64> {
        if self.limit.is_some_and(|l| self.frame >= l) {
            return None;
        }
        let t = self.frame as f64 * 1000.0 / self.hz;
        self.frame += 1;
        Some(t)
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub participant: Participant,
    pub timing: TimingConfig,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            participant: Participant::anonymous("anonymous"),
            timing: TimingConfig::default(),
        }
    }
}

/// Every event fed to the protocol during a driven session, for replay.
pub type EventLog = Vec<Event>;

/// Drive a recorded session over `plan` to completion.
pub fn run_session(
    plan: &TrialPlan,
    responder: &mut dyn Responder,
    clock: &mut dyn TickSource,
    options: &RunOptions,
) -> Result<SessionLog> {
    let trials = schedule(plan)?;
    run_schedule(&trials, plan, responder, clock, options).map(|(log, _)| log)
}

/// Like [`run_session`] with a precomputed schedule; also returns the event log.
pub fn run_schedule(
    trials: &[ScheduledTrial],
    plan: &TrialPlan,
    responder: &mut dyn Responder,
    clock: &mut dyn TickSource,
    options: &RunOptions,
) -> Result<(SessionLog, EventLog)> {
    if trials.is_empty() {
        return Err(Error::InsufficientData("plan has no trials".into()));
    }
    let mut protocol = Protocol::new(trials.to_vec(), options.timing, SessionMode::Recorded)?;
    let mut events = Vec::new();
    let mut pending: Option<(f64, bool)> = None;
    let mut exhausted = false;

    let feed = |protocol: &mut Protocol, ev: Event, events: &mut EventLog| -> Result<Vec<Effect>> {
        events.push(ev);
        protocol.advance(ev)
    };

    'outer: while !protocol.is_done() {
        if protocol.phase().kind() == crate::protocol::PhaseKind::BlockBreak {
            let t = protocol.last_event_at().unwrap_or(0.0);
            feed(&mut protocol, Event::Resume(t), &mut events)?;
            continue;
        }
        let Some(now) = clock.next_tick() else {
            exhausted = true;
            break;
        };
        if let Some((at, answer)) = pending {
            if at <= now {
                let ev = if answer {
                    Event::KeyYes(at)
                } else {
                    Event::KeyNo(at)
                };
                feed(&mut protocol, ev, &mut events)?;
                pending = None;
            }
        }
        for effect in feed(&mut protocol, Event::Tick(now), &mut events)? {
            if let Effect::ShowStimulus(index) = effect {
                let trial = trials
                    .iter()
                    .find(|t| t.index == index)
                    .expect("protocol only shows scheduled trials");
                match responder.respond(trial) {
                    Some(r) => pending = Some((now + r.rt_ms.max(0.0), r.answer)),
                    None => {
                        exhausted = true;
                        break 'outer;
                    }
                }
            }
        }
    }

    let complete = !exhausted && protocol.completed_all();
    let (records, strays, _phases) = protocol.into_parts();
    let log = SessionLog {
        header: SessionHeader {
            schema_version: LOG_SCHEMA_VERSION,
            participant: options.participant.clone(),
            mode: SessionMode::Recorded,
            experiment: plan.experiment,
            plan_seed: Some(plan.seed),
            expected_trials: trials.len(),
            timing: options.timing,
        },
        trials: records,
        stray_inputs: strays,
        questionnaire: None,
        complete,
    };
    Ok((log, events))
}

/// Session-level phase log reconstructed from trial records: entries sorted by
/// time, consecutive phases never overlapping.
pub fn phase_timeline(log: &SessionLog) -> Vec<PhaseEntry> {
    let mut out: Vec<PhaseEntry> = log.trials.iter().flat_map(|t| t.phase_log.iter().copied()).collect();
    out.sort_by(|a, b| a.at.total_cmp(&b.at));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::Experiment;
    use crate::stimgen::generate_plan;

    fn oracle(t: &ScheduledTrial) -> Option<Response> {
        Some(Response {
            answer: t.condition.target_present,
            rt_ms: 400.0,
        })
    }

    #[test]
    fn oracle_session_is_perfect_and_complete() {
        let plan = generate_plan(Experiment::Preattentive, 2);
        let log = run_session(&plan, &mut oracle, &mut FrameClock::new(60.0), &RunOptions::default())
            .unwrap();
        assert!(log.complete);
        assert_eq!(log.trials.len(), 192);
        assert!(log.trials.iter().all(|t| t.correct == Some(true)));
        log.validate().unwrap();
    }

    #[test]
    fn clock_exhaustion_flags_incomplete() {
        let plan = generate_plan(Experiment::Preattentive, 2);
        let log = run_session(
            &plan,
            &mut oracle,
            &mut FrameClock::with_limit(60.0, 1000),
            &RunOptions::default(),
        )
        .unwrap();
        assert!(!log.complete);
        assert!(log.trials.len() < 192);
    }

    #[test]
    fn responder_exhaustion_flags_incomplete() {
        let plan = generate_plan(Experiment::Conjunction, 2);
        let mut n = 0;
        let mut limited = |t: &ScheduledTrial| {
            n += 1;
            (n <= 10).then(|| Response {
                answer: t.condition.target_present,
                rt_ms: 900.0,
            })
        };
        let log =
            run_session(&plan, &mut limited, &mut FrameClock::new(60.0), &RunOptions::default())
                .unwrap();
        assert!(!log.complete);
        assert_eq!(log.trials.len(), 10);
    }

    #[test]
    fn jsonl_round_trip_and_csv() {
        let plan = generate_plan(Experiment::Conjunction, 4);
        let log = run_session(&plan, &mut oracle, &mut FrameClock::new(60.0), &RunOptions::default())
            .unwrap();
        let text = log.to_jsonl_string().unwrap();
        let back = SessionLog::read_jsonl(text.as_bytes(), "mem").unwrap();
        assert_eq!(back, log);

        let mut csv_buf = Vec::new();
        log.write_csv(&mut csv_buf).unwrap();
        let csv_text = String::from_utf8(csv_buf).unwrap();
        let mut lines = csv_text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "trial,block,set_size,present,eye,kind,response,correct,rt_ms,target_row,target_col"
        );
        assert_eq!(lines.count(), 144);
    }

    #[test]
    fn malformed_line_names_path() {
        let plan = generate_plan(Experiment::Conjunction, 4);
        let log = run_session(&plan, &mut oracle, &mut FrameClock::new(60.0), &RunOptions::default())
            .unwrap();
        let text = log
            .to_jsonl_string()
            .unwrap()
            .replacen("\"set_size\":4", "\"set_size\":\"four\"", 1);
        let err = SessionLog::read_jsonl(text.as_bytes(), "mem").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("condition.set_size"), "{msg}");
        assert!(msg.contains("mem:2"), "{msg}");
    }
}
