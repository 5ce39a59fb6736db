//! Externally clocked trial state machine.
//!
//! ```text
//! Fixation ──▶ Exposure ──▶ AwaitResponse ──▶ Feedback ──▶ Fixation | BlockBreak | Done
//!                  └──────── (until-response, or key buffered) ───▲
//! ```
//!
//! The driver feeds [`Event`]s with monotonic millisecond timestamps and acts
//! on the returned [`Effect`]s. Durations are quantized to whole display
//! frames; a phase ends on the first tick at or past its quantized length
//! (with half a frame of slack for floating-point tick times).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{Cell, Exposure, TrialCondition};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TimingConfig {
    pub fixation_ms: f64,
    pub feedback_ms: f64,
    pub refresh_hz: f64,
}

impl Default for TimingConfig {
    fn default() -> Self {
        Self {
            fixation_ms: 2500.0,
            feedback_ms: 500.0,
            refresh_hz: 60.0,
        }
    }
}

impl TimingConfig {
    pub fn frame_ms(&self) -> f64 {
        1000.0 / self.refresh_hz
    }

    /// Round a nominal duration to the nearest whole number of frames.
    pub fn quantize(&self, ms: f64) -> f64 {
        (ms / self.frame_ms()).round() * self.frame_ms()
    }

    pub fn frames(&self, ms: f64) -> u64 {
        (ms / self.frame_ms()).round() as u64
    }

    pub fn validate(&self) -> Result<()> {
        if self.refresh_hz > 0.0 && self.fixation_ms >= 0.0 && self.feedback_ms >= 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidStimulus(format!("invalid timing config {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionMode {
    Training,
    Recorded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sound {
    Correct,
    Incorrect,
    Neutral,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Phase {
    Fixation { remaining_ms: f64 },
    /// `None` while the stimulus stays up until a response.
    Exposure { remaining_ms: Option<f64> },
    AwaitResponse,
    Feedback { sound: Sound, remaining_ms: f64 },
    BlockBreak,
    Done,
}

impl Phase {
    pub fn kind(&self) -> PhaseKind {
        match self {
            Phase::Fixation { .. } => PhaseKind::Fixation,
            Phase::Exposure { .. } => PhaseKind::Exposure,
            Phase::AwaitResponse => PhaseKind::AwaitResponse,
            Phase::Feedback { .. } => PhaseKind::Feedback,
            Phase::BlockBreak => PhaseKind::BlockBreak,
            Phase::Done => PhaseKind::Done,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseKind {
    Fixation,
    Exposure,
    AwaitResponse,
    Feedback,
    BlockBreak,
    Done,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseEntry {
    pub phase: PhaseKind,
    pub at: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type", content = "at")]
pub enum Event {
    Tick(f64),
    KeyYes(f64),
    KeyNo(f64),
    /// Operator resumes after a block break.
    Resume(f64),
    /// Operator ends the session (the normal end of training).
    Stop(f64),
}

impl Event {
    pub fn at(&self) -> f64 {
        match *self {
            Event::Tick(t) | Event::KeyYes(t) | Event::KeyNo(t) | Event::Resume(t) | Event::Stop(t) => t,
        }
    }

    fn answer(&self) -> Option<bool> {
        match self {
            Event::KeyYes(_) => Some(true),
            Event::KeyNo(_) => Some(false),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Effect {
    ShowCrosshair,
    ShowStimulus(usize),
    ShowBlank,
    PlaySound(Sound),
    RecordTrial(TrialRecord),
    BlockBreak { completed_block: usize },
    Finished,
}

/// One trial as the state machine sees it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduledTrial {
    pub index: usize,
    pub block: usize,
    pub condition: TrialCondition,
    pub layout_seed: u64,
    #[serde(default)]
    pub target_cell: Option<Cell>,
    #[serde(default)]
    pub target_eccentricity_deg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_index: usize,
    pub block: usize,
    pub condition: TrialCondition,
    pub response: Option<bool>,
    pub correct: Option<bool>,
    pub reaction_ms: Option<f64>,
    pub stimulus_onset: Option<f64>,
    pub response_time: Option<f64>,
    /// Measured time the stimulus was on screen.
    #[serde(default)]
    pub exposure_ms: Option<f64>,
    /// Set when a fixed exposure deviates from nominal by more than a frame.
    #[serde(default)]
    pub exposure_flagged: bool,
    #[serde(default)]
    pub target_cell: Option<Cell>,
    #[serde(default)]
    pub phase_log: Vec<PhaseEntry>,
}

impl TrialRecord {
    /// Checks the response/correctness/timing relations of a finished record.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidStimulus(format!("trial {}: {m}", self.trial_index)));
        if self.correct != self.response.map(|r| r == self.condition.target_present) {
            return bad("correct does not match response");
        }
        if self.reaction_ms.is_some() != self.response.is_some() {
            return bad("reaction time present without response (or vice versa)");
        }
        if let Some(rt) = self.reaction_ms {
            if !(rt >= 0.0) || !rt.is_finite() {
                return bad("negative reaction time");
            }
            if let (Some(on), Some(resp)) = (self.stimulus_onset, self.response_time) {
                if ((resp - on) - rt).abs() > 1e-6 {
                    return bad("reaction time is not response_time - stimulus_onset");
                }
            }
        }
        self.condition.validate()
    }

    pub fn is_miss(&self) -> bool {
        self.condition.target_present && self.response == Some(false)
    }

    pub fn is_false_alarm(&self) -> bool {
        !self.condition.target_present && self.response == Some(true)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrayInput {
    pub at: f64,
    pub phase: PhaseKind,
    pub answer: Option<bool>,
    pub trial: Option<usize>,
}

#[derive(Debug, Clone)]
struct InProgress {
    schedule_pos: usize,
    onset: Option<f64>,
    exposure_end: Option<f64>,
    buffered: Option<(bool, f64)>,
    phase_log: Vec<PhaseEntry>,
}

/// The session state machine.
#[derive(Debug, Clone)]
pub struct Protocol {
    trials: Vec<ScheduledTrial>,
    timing: TimingConfig,
    mode: SessionMode,
    phase: Phase,
    phase_started: Option<f64>,
    last_event: Option<f64>,
    next_pos: usize,
    trials_run: usize,
    current: Option<InProgress>,
    records: Vec<TrialRecord>,
    strays: Vec<StrayInput>,
    phase_log: Vec<PhaseEntry>,
    stopped_early: bool,
}

impl Protocol {
    pub fn new(trials: Vec<ScheduledTrial>, timing: TimingConfig, mode: SessionMode) -> Result<Self> {
        timing.validate()?;
        if trials.is_empty() {
            return Err(Error::InsufficientData("protocol needs at least one trial".into()));
        }
        Ok(Self {
            trials,
            timing,
            mode,
            phase: Phase::Fixation {
                remaining_ms: timing.quantize(timing.fixation_ms),
            },
            phase_started: None,
            last_event: None,
            next_pos: 0,
            trials_run: 0,
            current: None,
            records: Vec::new(),
            strays: Vec::new(),
            phase_log: Vec::new(),
            stopped_early: false,
        })
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn mode(&self) -> SessionMode {
        self.mode
    }

    pub fn timing(&self) -> &TimingConfig {
        &self.timing
    }

    pub fn is_done(&self) -> bool {
        self.phase == Phase::Done
    }

    pub fn last_event_at(&self) -> Option<f64> {
        self.last_event
    }

    pub fn records(&self) -> &[TrialRecord] {
        &self.records
    }

    pub fn stray_inputs(&self) -> &[StrayInput] {
        &self.strays
    }

    pub fn phase_log(&self) -> &[PhaseEntry] {
        &self.phase_log
    }

    /// True when a recorded session ran every scheduled trial.
    pub fn completed_all(&self) -> bool {
        !self.stopped_early && self.records.len() == self.trials.len()
    }

    pub fn into_parts(self) -> (Vec<TrialRecord>, Vec<StrayInput>, Vec<PhaseEntry>) {
        (self.records, self.strays, self.phase_log)
    }

    fn enter(&mut self, phase: Phase, now: f64) {
        self.phase = phase;
        self.phase_started = Some(now);
        let entry = PhaseEntry {
            phase: phase.kind(),
            at: now,
        };
        self.phase_log.push(entry);
        if let Some(cur) = self.current.as_mut() {
            if !matches!(phase.kind(), PhaseKind::BlockBreak | PhaseKind::Done) {
                cur.phase_log.push(entry);
            }
        }
    }

    fn elapsed_reached(&self, now: f64, nominal_ms: f64) -> bool {
        let started = self.phase_started.unwrap_or(now);
        now - started >= self.timing.quantize(nominal_ms) - self.timing.frame_ms() / 2.0
    }

    fn remaining(&self, now: f64, nominal_ms: f64) -> f64 {
        let started = self.phase_started.unwrap_or(now);
        (self.timing.quantize(nominal_ms) - (now - started)).max(0.0)
    }

    fn start_trial(&mut self, now: f64, effects: &mut Vec<Effect>) {
        let pos = self.next_pos;
        self.current = Some(InProgress {
            schedule_pos: pos,
            onset: None,
            exposure_end: None,
            buffered: None,
            phase_log: Vec::new(),
        });
        self.enter(
            Phase::Fixation {
                remaining_ms: self.timing.quantize(self.timing.fixation_ms),
            },
            now,
        );
        effects.push(Effect::ShowCrosshair);
    }

    fn stray(&mut self, now: f64, answer: Option<bool>) {
        let trial = self
            .current
            .as_ref()
            .map(|c| self.trials[c.schedule_pos].index);
        self.strays.push(StrayInput {
            at: now,
            phase: self.phase.kind(),
            answer,
            trial,
        });
    }

    fn current_trial(&self) -> &ScheduledTrial {
        let pos = self.current.as_ref().expect("trial in progress").schedule_pos;
        &self.trials[pos]
    }

    fn exposure(&self) -> Exposure {
        self.current_trial().condition.exposure
    }

    fn finish_response(&mut self, answer: bool, pressed_at: f64, now: f64, effects: &mut Vec<Effect>) {
        let trial = self.current_trial().clone();
        let correct = answer == trial.condition.target_present;
        let sound = match self.mode {
            SessionMode::Recorded => Sound::Neutral,
            SessionMode::Training if correct => Sound::Correct,
            SessionMode::Training => Sound::Incorrect,
        };
        self.enter(
            Phase::Feedback {
                sound,
                remaining_ms: self.timing.quantize(self.timing.feedback_ms),
            },
            now,
        );
        let cur = self.current.as_ref().expect("trial in progress");
        let onset = cur.onset;
        let exposure_ms = match (cur.onset, cur.exposure_end) {
            (Some(on), Some(off)) => Some(off - on),
            _ => None,
        };
        let exposure_flagged = match (trial.condition.exposure, exposure_ms) {
            (Exposure::Fixed(nominal), Some(actual)) => {
                (actual - nominal).abs() > self.timing.frame_ms() + 1e-6
            }
            _ => false,
        };
        let record = TrialRecord {
            trial_index: match self.mode {
                SessionMode::Recorded => trial.index,
                SessionMode::Training => self.trials_run,
            },
            block: trial.block,
            condition: trial.condition.clone(),
            response: Some(answer),
            correct: Some(correct),
            reaction_ms: onset.map(|on| pressed_at - on),
            stimulus_onset: onset,
            response_time: Some(pressed_at),
            exposure_ms,
            exposure_flagged,
            target_cell: trial.target_cell,
            phase_log: cur.phase_log.clone(),
        };
        self.trials_run += 1;
        self.records.push(record.clone());
        effects.push(Effect::PlaySound(sound));
        effects.push(Effect::RecordTrial(record));
    }

    fn after_feedback(&mut self, now: f64, effects: &mut Vec<Effect>) {
        let finished_pos = self.current.as_ref().expect("trial in progress").schedule_pos;
        let finished_block = self.trials[finished_pos].block;
        self.next_pos = finished_pos + 1;
        match self.mode {
            SessionMode::Recorded => {
                if self.next_pos >= self.trials.len() {
                    self.current = None;
                    self.enter(Phase::Done, now);
                    effects.push(Effect::Finished);
                    return;
                }
                if self.trials[self.next_pos].block != finished_block {
                    self.current = None;
                    self.enter(Phase::BlockBreak, now);
                    effects.push(Effect::BlockBreak {
                        completed_block: finished_block,
                    });
                    return;
                }
            }
            SessionMode::Training => {
                self.next_pos %= self.trials.len();
            }
        }
        self.start_trial(now, effects);
    }

    /// Feed one event; returns the display/audio/logging effects it causes.
    pub fn advance(&mut self, event: Event) -> Result<Vec<Effect>> {
        if self.is_done() {
            return Err(Error::SessionDone);
        }
        let now = event.at();
        if !now.is_finite() {
            return Err(Error::NonMonotonic {
                now,
                last: self.last_event.unwrap_or(0.0),
            });
        }
        if let Some(last) = self.last_event {
            if now < last {
                return Err(Error::NonMonotonic { now, last });
            }
        }
        self.last_event = Some(now);

        let mut effects = Vec::new();
        if self.phase_started.is_none() {
            self.start_trial(now, &mut effects);
        }

        if let Event::Stop(_) = event {
            if self.mode == SessionMode::Recorded && !self.completed_all() {
                self.stopped_early = true;
            }
            self.current = None;
            self.enter(Phase::Done, now);
            effects.push(Effect::Finished);
            return Ok(effects);
        }

        match (self.phase, event) {
            (Phase::Fixation { .. }, Event::Tick(_)) => {
                if self.elapsed_reached(now, self.timing.fixation_ms) {
                    let exposure = self.exposure();
                    let remaining = match exposure {
                        Exposure::Fixed(ms) => Some(self.timing.quantize(ms)),
                        Exposure::UntilResponse => None,
                    };
                    self.enter(Phase::Exposure { remaining_ms: remaining }, now);
                    let cur = self.current.as_mut().expect("trial in progress");
                    cur.onset = Some(now);
                    effects.push(Effect::ShowStimulus(self.current_trial().index));
                } else {
                    self.phase = Phase::Fixation {
                        remaining_ms: self.remaining(now, self.timing.fixation_ms),
                    };
                }
            }
            (Phase::Exposure { .. }, Event::Tick(_)) => {
                if let Exposure::Fixed(ms) = self.exposure() {
                    if self.elapsed_reached(now, ms) {
                        let cur = self.current.as_mut().expect("trial in progress");
                        cur.exposure_end = Some(now);
                        effects.push(Effect::ShowBlank);
                        match cur.buffered.take() {
                            Some((answer, at)) => self.finish_response(answer, at, now, &mut effects),
                            None => self.enter(Phase::AwaitResponse, now),
                        }
                    } else {
                        self.phase = Phase::Exposure {
                            remaining_ms: Some(self.remaining(now, ms)),
                        };
                    }
                }
            }
            (Phase::Exposure { .. }, Event::KeyYes(_) | Event::KeyNo(_)) => {
                let answer = event.answer().expect("key event");
                match self.exposure() {
                    Exposure::UntilResponse => {
                        let cur = self.current.as_mut().expect("trial in progress");
                        cur.exposure_end = Some(now);
                        effects.push(Effect::ShowBlank);
                        self.finish_response(answer, now, now, &mut effects);
                    }
                    Exposure::Fixed(_) => {
                        let cur = self.current.as_mut().expect("trial in progress");
                        if cur.buffered.is_none() {
                            cur.buffered = Some((answer, now));
                        } else {
                            self.stray(now, Some(answer));
                        }
                    }
                }
            }
            (Phase::AwaitResponse, Event::KeyYes(_) | Event::KeyNo(_)) => {
                let answer = event.answer().expect("key event");
                self.finish_response(answer, now, now, &mut effects);
            }
            (Phase::Feedback { sound, .. }, Event::Tick(_)) => {
                if self.elapsed_reached(now, self.timing.feedback_ms) {
                    self.after_feedback(now, &mut effects);
                } else {
                    self.phase = Phase::Feedback {
                        sound,
                        remaining_ms: self.remaining(now, self.timing.feedback_ms),
                    };
                }
            }
            (Phase::BlockBreak, Event::Resume(_)) => {
                self.start_trial(now, &mut effects);
            }
            (_, Event::KeyYes(_) | Event::KeyNo(_)) => {
                self.stray(now, event.answer());
            }
            _ => {}
        }
        Ok(effects)
    }
}
