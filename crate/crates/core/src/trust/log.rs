//! Canonical session log: one JSON object per line.
//!
//! ```text
//! {"participant_id":"p01","trial":1,"complexity":"L","action":"auto","outcome":"success",
//!  "message":"none","reported_trust":7,"counting":"correct"}
//! ```
//!
//! Unknown fields are ignored and field order does not matter. Two optional
//! fields beyond the core set are written only when true: `practice` and
//! `manual_abandoned`.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    delivery_reward, encode_event, counting_reward, Complexity, DomainError, HumanAction, Outcome,
    RobotMessage, TransitionEvent,
};
use crate::iohmm::FilterStep;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CountingAnswer {
    #[serde(rename = "correct")]
    Correct,
    #[serde(rename = "incorrect")]
    Incorrect,
    #[serde(rename = "none")]
    NoAnswer,
}

/// One completed trial.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrialRecord {
    pub trial_index: u32,
    pub complexity: Complexity,
    pub human_action: HumanAction,
    pub outcome: Outcome,
    pub robot_message: RobotMessage,
    pub reported_trust: Option<u8>,
    pub counting: Option<CountingAnswer>,
    pub delivery_score: i32,
    /// Manual delivery that the participant gave up on. Scored normally.
    pub manual_abandoned: bool,
}

impl TrialRecord {
    pub fn new(
        trial_index: u32,
        complexity: Complexity,
        human_action: HumanAction,
        outcome: Outcome,
        robot_message: RobotMessage,
    ) -> Result<Self, DomainError> {
        encode_event(human_action, outcome, robot_message)?;
        Ok(Self {
            trial_index,
            complexity,
            human_action,
            outcome,
            robot_message,
            reported_trust: None,
            counting: None,
            delivery_score: delivery_reward(human_action, outcome)?,
            manual_abandoned: false,
        })
    }

    pub fn with_report(mut self, value: u8) -> Result<Self, DomainError> {
        if !(1..=10).contains(&value) {
            return Err(DomainError::ReportOutOfRange(value));
        }
        self.reported_trust = Some(value);
        Ok(self)
    }

    pub fn with_counting(mut self, answer: CountingAnswer) -> Self {
        self.counting = Some(answer);
        self
    }

    pub fn counting_score(&self) -> Option<i32> {
        self.counting.map(counting_reward)
    }

    pub fn event(&self) -> Result<TransitionEvent, DomainError> {
        encode_event(self.human_action, self.outcome, self.robot_message).map_err(|e| DomainError::Trial {
            trial: self.trial_index,
            source: Box::new(e),
        })
    }

    pub fn filter_step(&self) -> Result<FilterStep, DomainError> {
        Ok(FilterStep {
            emission_input: self.complexity.index(),
            output: self.human_action.index(),
            transition_input: self.event()?.index(),
        })
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        let wrap = |e| DomainError::Trial {
            trial: self.trial_index,
            source: Box::new(e),
        };
        self.event()?;
        let expected = delivery_reward(self.human_action, self.outcome).map_err(wrap)?;
        if expected != self.delivery_score {
            return Err(wrap(DomainError::DeliveryScore {
                stored: self.delivery_score,
                expected,
            }));
        }
        if let Some(r) = self.reported_trust {
            if !(1..=10).contains(&r) {
                return Err(wrap(DomainError::ReportOutOfRange(r)));
            }
        }
        Ok(())
    }
}

/// All trials of one participant, in order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionLog {
    pub participant_id: String,
    pub practice: bool,
    trials: Vec<TrialRecord>,
}

impl SessionLog {
    pub fn new(participant_id: impl Into<String>, practice: bool, trials: Vec<TrialRecord>) -> Result<Self, DomainError> {
        let log = Self {
            participant_id: participant_id.into(),
            practice,
            trials,
        };
        log.validate()?;
        Ok(log)
    }

    /// An empty session to be filled with [`SessionLog::push`].
    pub fn empty(participant_id: impl Into<String>, practice: bool) -> Self {
        Self {
            participant_id: participant_id.into(),
            practice,
            trials: Vec::new(),
        }
    }

    pub fn trials(&self) -> &[TrialRecord] {
        &self.trials
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    /// Appends the next trial; its index must follow the last one.
    pub fn push(&mut self, trial: TrialRecord) -> Result<(), DomainError> {
        trial.validate()?;
        let expected = self.trials.len() as u32 + 1;
        if trial.trial_index != expected {
            return Err(DomainError::TrialOrder {
                position: self.trials.len(),
                found: trial.trial_index,
            });
        }
        self.trials.push(trial);
        Ok(())
    }

    /// Non-empty, trials numbered 1, 2, 3, ... and each trial consistent.
    pub fn validate(&self) -> Result<(), DomainError> {
        if self.trials.is_empty() {
            return Err(DomainError::EmptySession);
        }
        for (position, trial) in self.trials.iter().enumerate() {
            if trial.trial_index != position as u32 + 1 {
                return Err(DomainError::TrialOrder {
                    position,
                    found: trial.trial_index,
                });
            }
            trial.validate()?;
        }
        Ok(())
    }

    pub fn total_delivery_score(&self) -> i32 {
        self.trials.iter().map(|t| t.delivery_score).sum()
    }

    pub fn total_counting_score(&self) -> i32 {
        self.trials.iter().filter_map(TrialRecord::counting_score).sum()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct LogLine {
    participant_id: String,
    trial: u32,
    complexity: Complexity,
    action: HumanAction,
    outcome: Outcome,
    message: RobotMessage,
    #[serde(default)]
    reported_trust: Option<u8>,
    #[serde(default)]
    counting: Option<CountingAnswer>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    practice: bool,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    manual_abandoned: bool,
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("session {participant_id}: {source}")]
    Session {
        participant_id: String,
        #[source]
        source: DomainError,
    },
    #[error("{}: {source}", path.display())]
    File {
        path: PathBuf,
        #[source]
        source: Box<LogError>,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Parses a log document into sessions, keyed by (participant, practice flag)
/// in order of first appearance.
pub fn parse_log_str(text: &str) -> Result<Vec<SessionLog>, LogError> {
    let mut sessions: Vec<SessionLog> = Vec::new();
    let mut index: HashMap<(String, bool), usize> = HashMap::new();

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let line: LogLine = serde_json::from_str(raw).map_err(|e| LogError::Line {
            line: line_no,
            message: e.to_string(),
        })?;
        let line_err = |e: DomainError| LogError::Line {
            line: line_no,
            message: e.to_string(),
        };
        let mut record = TrialRecord::new(line.trial, line.complexity, line.action, line.outcome, line.message)
            .map_err(line_err)?;
        if let Some(r) = line.reported_trust {
            record = record.with_report(r).map_err(line_err)?;
        }
        record.counting = line.counting;
        record.manual_abandoned = line.manual_abandoned;

        let key = (line.participant_id.clone(), line.practice);
        let slot = *index.entry(key).or_insert_with(|| {
            sessions.push(SessionLog::empty(line.participant_id.clone(), line.practice));
            sessions.len() - 1
        });
        sessions[slot].push(record).map_err(line_err)?;
    }
    Ok(sessions)
}

/// Serializes sessions in the canonical line format.
pub fn write_log_string(sessions: &[SessionLog]) -> String {
    let mut out = String::new();
    for session in sessions {
        for t in session.trials() {
            writeln!(out, "{}", trial_line(&session.participant_id, session.practice, t))
                .expect("writing to a String cannot fail");
        }
    }
    out
}

/// One canonical log line, without the trailing newline.
pub fn trial_line(participant_id: &str, practice: bool, t: &TrialRecord) -> String {
    let line = LogLine {
        participant_id: participant_id.to_string(),
        trial: t.trial_index,
        complexity: t.complexity,
        action: t.human_action,
        outcome: t.outcome,
        message: t.robot_message,
        reported_trust: t.reported_trust,
        counting: t.counting,
        practice,
        manual_abandoned: t.manual_abandoned,
    };
    serde_json::to_string(&line).expect("log lines always serialize")
}

pub fn read_log_file(path: &Path) -> Result<Vec<SessionLog>, LogError> {
    let text = std::fs::read_to_string(path).map_err(|source| LogError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_log_str(&text).map_err(|e| LogError::File {
        path: path.to_path_buf(),
        source: Box::new(e),
    })
}

/// Reads log files; directories contribute their `*.jsonl` files, except
/// hidden-trust sidecars (`*.hidden.jsonl`), in name order.
pub fn read_log_paths<P: AsRef<Path>>(paths: &[P]) -> Result<Vec<SessionLog>, LogError> {
    let mut files = Vec::new();
    for p in paths {
        let p = p.as_ref();
        if p.is_dir() {
            let entries = std::fs::read_dir(p).map_err(|source| LogError::Io {
                path: p.to_path_buf(),
                source,
            })?;
            let mut found: Vec<PathBuf> = entries
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| {
                    let name = f.file_name().and_then(|n| n.to_str()).unwrap_or("");
                    name.ends_with(".jsonl") && !name.ends_with(".hidden.jsonl")
                })
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(p.to_path_buf());
        }
    }
    let mut sessions = Vec::new();
    for f in files {
        sessions.extend(read_log_file(&f)?);
    }
    Ok(sessions)
}
