//! Append-only on-disk session store: one JSON-lines file per session.

use std::collections::{BTreeMap, HashMap};
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use deadeye_core::protocol::{ScheduledTrial, StrayInput, TrialRecord};
use deadeye_core::session::{LogLine, SessionHeader, SessionLog};
use deadeye_core::stats::QuestionnaireResponse;
use deadeye_core::Error as CoreError;
use tokio::sync::Mutex;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("unknown session {0}")]
    NotFound(String),
    #[error("{message}")]
    Invalid { path: String, message: String },
    #[error("{0}")]
    Conflict(String),
    #[error(transparent)]
    Core(#[from] CoreError),
}

fn invalid(path: impl Into<String>, message: impl Into<String>) -> StoreError {
    StoreError::Invalid {
        path: path.into(),
        message: message.into(),
    }
}

/// Server-side view of one session.
#[derive(Debug)]
pub struct SessionState {
    pub id: String,
    pub header: SessionHeader,
    pub records: BTreeMap<usize, TrialRecord>,
    pub stray_inputs: Vec<StrayInput>,
    pub questionnaire: Option<QuestionnaireResponse>,
    pub complete: bool,
    file: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct Ingest {
    pub accepted: usize,
    pub duplicates: usize,
    pub total: usize,
    pub complete: bool,
}

impl SessionState {
    fn append(&self, line: &LogLine) -> Result<(), StoreError> {
        let mut text = serde_json::to_string(line).map_err(CoreError::from)?;
        text.push('\n');
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.file)
            .map_err(|e| CoreError::io(&self.file, e))?;
        f.write_all(text.as_bytes())
            .and_then(|_| f.sync_data())
            .map_err(|e| CoreError::io(&self.file, e).into())
    }

    pub fn log(&self) -> SessionLog {
        SessionLog {
            header: self.header.clone(),
            trials: self.records.values().cloned().collect(),
            stray_inputs: self.stray_inputs.clone(),
            questionnaire: self.questionnaire,
            complete: self.complete,
        }
    }

    /// Adds a batch of records. Each record must match the scheduled trial at
    /// its index. Re-sending an identical record is a no-op; a different
    /// record for a stored index, or a new index below the highest stored
    /// one, is a conflict. The batch is checked completely before anything
    /// is written.
    pub fn ingest(
        &mut self,
        records: Vec<TrialRecord>,
        strays: Vec<StrayInput>,
        schedule: &[ScheduledTrial],
    ) -> Result<Ingest, StoreError> {
        let mut last = self.records.keys().next_back().copied();
        let mut fresh: Vec<TrialRecord> = Vec::new();
        let mut duplicates = 0;
        for (i, r) in records.into_iter().enumerate() {
            let path = format!("records[{i}]");
            r.validate().map_err(|e| invalid(&path, e.to_string()))?;
            let Some(planned) = schedule.get(r.trial_index) else {
                return Err(invalid(
                    format!("{path}.trial_index"),
                    format!("no trial {} in a {}-trial plan", r.trial_index, schedule.len()),
                ));
            };
            if planned.condition != r.condition || planned.block != r.block {
                return Err(invalid(
                    format!("{path}.condition"),
                    "record does not match the planned trial",
                ));
            }
            let existing = self
                .records
                .get(&r.trial_index)
                .or_else(|| fresh.iter().find(|f| f.trial_index == r.trial_index));
            if let Some(existing) = existing {
                if *existing != r {
                    return Err(StoreError::Conflict(format!(
                        "trial {} already recorded with different content",
                        r.trial_index
                    )));
                }
                duplicates += 1;
                continue;
            }
            if let Some(l) = last.filter(|&l| r.trial_index < l) {
                return Err(StoreError::Conflict(format!(
                    "trial {} arrives after trial {l}",
                    r.trial_index
                )));
            }
            last = Some(r.trial_index);
            fresh.push(r);
        }
        let accepted = fresh.len();
        for r in fresh {
            self.append(&LogLine::Trial(r.clone()))?;
            self.records.insert(r.trial_index, r);
        }
        for s in strays {
            if !self.stray_inputs.contains(&s) {
                self.append(&LogLine::Stray(s))?;
                self.stray_inputs.push(s);
            }
        }
        if !self.complete && self.records.len() == self.header.expected_trials {
            self.complete = true;
            self.append(&LogLine::Footer { complete: true })?;
        }
        Ok(Ingest {
            accepted,
            duplicates,
            total: self.records.len(),
            complete: self.complete,
        })
    }

    /// Stores the questionnaire once; an identical resend is a no-op.
    pub fn set_questionnaire(&mut self, q: QuestionnaireResponse) -> Result<(), StoreError> {
        q.validate().map_err(|e| match e {
            CoreError::Questionnaire { field, reason } => invalid(field, reason),
            other => other.into(),
        })?;
        match self.questionnaire {
            Some(existing) if existing == q => Ok(()),
            Some(_) => Err(StoreError::Conflict("questionnaire already submitted".into())),
            None => {
                self.append(&LogLine::Questionnaire(q))?;
                self.questionnaire = Some(q);
                Ok(())
            }
        }
    }
}

/// All sessions, each behind its own lock.
#[derive(Debug)]
pub struct Store {
    dir: PathBuf,
    sessions: std::sync::Mutex<HashMap<String, Arc<Mutex<SessionState>>>>,
}

impl Store {
    /// Opens `dir`, creating it if needed, and reloads every stored session.
    pub fn open(dir: &Path) -> Result<Store, StoreError> {
        std::fs::create_dir_all(dir).map_err(|e| CoreError::io(dir, e))?;
        let mut sessions = HashMap::new();
        let entries = std::fs::read_dir(dir).map_err(|e| CoreError::io(dir, e))?;
        for entry in entries {
            let path = entry.map_err(|e| CoreError::io(dir, e))?.path();
            if path.extension().is_none_or(|x| x != "jsonl") {
                continue;
            }
            let Some(id) = path.file_stem().and_then(|s| s.to_str()).map(str::to_owned) else {
                continue;
            };
            let log = SessionLog::load(&path)?;
            let state = SessionState {
                id: id.clone(),
                header: log.header,
                records: log.trials.into_iter().map(|t| (t.trial_index, t)).collect(),
                stray_inputs: log.stray_inputs,
                questionnaire: log.questionnaire,
                complete: log.complete,
                file: path,
            };
            sessions.insert(id, Arc::new(Mutex::new(state)));
        }
        Ok(Store {
            dir: dir.to_path_buf(),
            sessions: std::sync::Mutex::new(sessions),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn create(&self, id: String, header: SessionHeader) -> Result<(), StoreError> {
        let state = SessionState {
            file: self.dir.join(format!("{id}.jsonl")),
            id: id.clone(),
            header,
            records: BTreeMap::new(),
            stray_inputs: Vec::new(),
            questionnaire: None,
            complete: false,
        };
        state.append(&LogLine::Header(state.header.clone()))?;
        self.sessions
            .lock()
            .expect("session map lock")
            .insert(id, Arc::new(Mutex::new(state)));
        Ok(())
    }

    pub fn get(&self, id: &str) -> Result<Arc<Mutex<SessionState>>, StoreError> {
        self.sessions
            .lock()
            .expect("session map lock")
            .get(id)
            .cloned()
            .ok_or_else(|| StoreError::NotFound(id.to_string()))
    }

    pub fn ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self
            .sessions
            .lock()
            .expect("session map lock")
            .keys()
            .cloned()
            .collect();
        ids.sort();
        ids
    }

    /// Snapshot of every session's log.
    pub async fn logs(&self) -> Vec<SessionLog> {
        let mut out = Vec::new();
        for id in self.ids() {
            if let Ok(s) = self.get(&id) {
                out.push(s.lock().await.log());
            }
        }
        out
    }
}
