//! Per-session files in a data directory:
//!
//! - `<id>.session.json`: the session configuration, written once;
//! - `<id>.journal`: accepted commands, one JSON object per line, append-only;
//! - `<id>.log.jsonl`: completed trials in the canonical log format, append-only.
//!
//! Recovery rebuilds each session by replaying its journal against the
//! configuration. The canonical log is derived data and is rewritten from the
//! replayed state if it fell behind.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::session::{Command, LiveSession, SessionConfig, SessionError};
use crate::iohmm::ModelParams;
use crate::trust::{trial_line, write_log_string};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Corrupt {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{}: replay failed at command {index}: {source}", path.display())]
    Replay {
        path: PathBuf,
        index: usize,
        #[source]
        source: SessionError,
    },
    #[error("session {0} already exists")]
    Exists(String),
}

#[derive(Debug, Clone)]
pub struct SessionStore {
    dir: PathBuf,
}

/// A session rebuilt from disk, with anything odd found on the way.
#[derive(Debug)]
pub struct Recovered {
    pub session: LiveSession,
    pub warnings: Vec<String>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

impl SessionStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn meta_path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.session.json"))
    }

    fn journal_path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.journal"))
    }

    pub fn log_path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.log.jsonl"))
    }

    pub fn create(&self, config: &SessionConfig) -> Result<(), StoreError> {
        let meta = self.meta_path(&config.session_id);
        let json = serde_json::to_string_pretty(config).expect("config serializes");
        let mut f = OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&meta)
            .map_err(|e| match e.kind() {
                std::io::ErrorKind::AlreadyExists => StoreError::Exists(config.session_id.clone()),
                _ => StoreError::Io {
                    path: meta.clone(),
                    source: e,
                },
            })?;
        f.write_all(json.as_bytes()).map_err(io_err(&meta))?;
        f.sync_all().map_err(io_err(&meta))?;
        for path in [self.journal_path(&config.session_id), self.log_path(&config.session_id)] {
            File::create(&path).map_err(io_err(&path))?;
        }
        Ok(())
    }

    fn append_line(path: &Path, line: &str) -> Result<(), StoreError> {
        let mut f = OpenOptions::new().append(true).open(path).map_err(io_err(path))?;
        f.write_all(format!("{line}\n").as_bytes()).map_err(io_err(path))?;
        f.sync_data().map_err(io_err(path))
    }

    /// Persists an accepted command; `after` is the session state once applied.
    pub fn record(&self, command: &Command, before_trials: usize, after: &LiveSession) -> Result<(), StoreError> {
        let id = after.id();
        let json = serde_json::to_string(command).expect("commands serialize");
        Self::append_line(&self.journal_path(id), &json)?;
        let log = after.log();
        if log.len() > before_trials {
            let cfg = after.config();
            for t in &log.trials()[before_trials..] {
                Self::append_line(&self.log_path(id), &trial_line(&cfg.session_id, cfg.practice, t))?;
            }
        }
        Ok(())
    }

    /// Rebuilds every session found in the directory, in id order.
    pub fn recover_all(&self, params: &ModelParams) -> Result<Vec<Recovered>, StoreError> {
        let entries = fs::read_dir(&self.dir).map_err(io_err(&self.dir))?;
        let mut ids: Vec<String> = entries
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                e.file_name()
                    .to_str()
                    .and_then(|n| n.strip_suffix(".session.json"))
                    .map(str::to_string)
            })
            .collect();
        ids.sort();
        ids.iter().map(|id| self.recover(id, params)).collect()
    }

    pub fn recover(&self, id: &str, params: &ModelParams) -> Result<Recovered, StoreError> {
        let meta = self.meta_path(id);
        let text = fs::read_to_string(&meta).map_err(io_err(&meta))?;
        let config: SessionConfig = serde_json::from_str(&text).map_err(|source| StoreError::Corrupt {
            path: meta.clone(),
            source,
        })?;
        let mut session = LiveSession::new(config, params.clone()).map_err(|source| StoreError::Replay {
            path: meta.clone(),
            index: 0,
            source,
        })?;
        let mut warnings = Vec::new();

        let journal = self.journal_path(id);
        let text = match fs::read_to_string(&journal) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(io_err(&journal)(e)),
        };
        let complete = text.ends_with('\n');
        let lines: Vec<&str> = text.lines().collect();
        for (i, line) in lines.iter().enumerate() {
            let command: Command = match serde_json::from_str(line) {
                Ok(c) => c,
                // A crash mid-write leaves a torn final line; that command was never acknowledged.
                Err(_) if i + 1 == lines.len() && !complete => {
                    warnings.push(format!("{}: dropped torn final line", journal.display()));
                    break;
                }
                Err(source) => {
                    return Err(StoreError::Corrupt {
                        path: journal.clone(),
                        source,
                    })
                }
            };
            session.apply(&command).map_err(|source| StoreError::Replay {
                path: journal.clone(),
                index: i + 1,
                source,
            })?;
        }
        if !complete && !text.is_empty() {
            let valid: String = lines[..lines.len() - 1].iter().map(|l| format!("{l}\n")).collect();
            fs::write(&journal, valid).map_err(io_err(&journal))?;
        }

        let log_path = self.log_path(id);
        let expected = write_log_string(std::slice::from_ref(session.log()));
        let on_disk = fs::read_to_string(&log_path).unwrap_or_default();
        if on_disk != expected {
            warnings.push(format!("{}: rebuilt from journal", log_path.display()));
            fs::write(&log_path, expected).map_err(io_err(&log_path))?;
        }
        Ok(Recovered { session, warnings })
    }
}
