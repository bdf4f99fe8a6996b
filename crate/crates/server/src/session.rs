//! Append-only JSON Lines session log.
//!
//! Every recommend turn and every accepted app is one line. On start-up the
//! log is replayed to rebuild the in-memory index, so session ids stay unique
//! across restarts. All writes go through one mutex, which keeps lines whole
//! and in order.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use intentbridge_core::api::Overrides;
use intentbridge_core::RecommendationSet;
use serde::{Deserialize, Serialize};
use tokio::sync::Mutex;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SessionEvent {
    Turn {
        session_id: String,
        turn: usize,
        timestamp: DateTime<Utc>,
        utterance: String,
        overrides: Overrides,
        set: Box<RecommendationSet>,
    },
    Feedback {
        session_id: String,
        turn: usize,
        timestamp: DateTime<Utc>,
        accepted_app: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub turn: usize,
    pub timestamp: DateTime<Utc>,
    pub utterance: String,
    pub set: RecommendationSet,
    pub accepted_app: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub session_id: String,
    pub turns: Vec<TurnRecord>,
}

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("session `{0}` has no turn {1}")]
    UnknownTurn(String, usize),
    #[error("app `{app}` was not recommended in turn {turn}")]
    UnknownApp { turn: usize, app: String },
    #[error("session log {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("session log line {line}: {source}")]
    Parse {
        line: usize,
        source: serde_json::Error,
    },
}

struct Inner {
    sessions: HashMap<String, SessionRecord>,
    file: Option<File>,
}

pub struct SessionLog {
    path: Option<PathBuf>,
    inner: Mutex<Inner>,
}

/// Reads every event of a log file in order.
pub fn read_events(path: &Path) -> Result<Vec<SessionEvent>, SessionError> {
    let file = File::open(path).map_err(|source| SessionError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut events = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| SessionError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        events.push(
            serde_json::from_str(&line).map_err(|source| SessionError::Parse {
                line: idx + 1,
                source,
            })?,
        );
    }
    Ok(events)
}

fn apply(sessions: &mut HashMap<String, SessionRecord>, event: &SessionEvent) {
    match event {
        SessionEvent::Turn {
            session_id,
            turn,
            timestamp,
            utterance,
            set,
            ..
        } => {
            let rec = sessions
                .entry(session_id.clone())
                .or_insert_with(|| SessionRecord {
                    session_id: session_id.clone(),
                    turns: Vec::new(),
                });
            rec.turns.push(TurnRecord {
                turn: *turn,
                timestamp: *timestamp,
                utterance: utterance.clone(),
                set: (**set).clone(),
                accepted_app: None,
            });
        }
        SessionEvent::Feedback {
            session_id,
            turn,
            accepted_app,
            ..
        } => {
            if let Some(t) = sessions
                .get_mut(session_id)
                .and_then(|s| s.turns.iter_mut().find(|t| t.turn == *turn))
            {
                t.accepted_app = Some(accepted_app.clone());
            }
        }
    }
}

impl SessionLog {
    /// Keeps sessions in memory only.
    pub fn in_memory() -> Self {
        Self {
            path: None,
            inner: Mutex::new(Inner {
                sessions: HashMap::new(),
                file: None,
            }),
        }
    }

    /// Opens (creating if needed) a log file and replays its contents.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, SessionError> {
        let path = path.into();
        let io_err = |source| SessionError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut sessions = HashMap::new();
        if path.exists() {
            for event in read_events(&path)? {
                apply(&mut sessions, &event);
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io_err)?;
        Ok(Self {
            path: Some(path),
            inner: Mutex::new(Inner {
                sessions,
                file: Some(file),
            }),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    fn write(&self, inner: &mut Inner, event: &SessionEvent) -> Result<(), SessionError> {
        if let Some(file) = inner.file.as_mut() {
            let mut line = serde_json::to_string(event).expect("session event serializes");
            line.push('\n');
            file.write_all(line.as_bytes())
                .and_then(|_| file.flush())
                .map_err(|source| SessionError::Io {
                    path: self
                        .path
                        .as_ref()
                        .map(|p| p.display().to_string())
                        .unwrap_or_default(),
                    source,
                })?;
        }
        apply(&mut inner.sessions, event);
        Ok(())
    }

    /// Appends a turn, opening a new session when `session_id` is `None`.
    /// Returns the session id and the 1-based turn number.
    pub async fn record_turn(
        &self,
        session_id: Option<&str>,
        utterance: &str,
        overrides: &Overrides,
        set: &RecommendationSet,
    ) -> Result<(String, usize), SessionError> {
        let mut inner = self.inner.lock().await;
        let session_id = match session_id {
            Some(id) => {
                if !inner.sessions.contains_key(id) {
                    return Err(SessionError::UnknownSession(id.to_string()));
                }
                id.to_string()
            }
            None => loop {
                let id = uuid::Uuid::new_v4().to_string();
                if !inner.sessions.contains_key(&id) {
                    break id;
                }
            },
        };
        let turn = inner
            .sessions
            .get(&session_id)
            .map_or(0, |s| s.turns.len())
            + 1;
        let event = SessionEvent::Turn {
            session_id: session_id.clone(),
            turn,
            timestamp: Utc::now(),
            utterance: utterance.to_string(),
            overrides: overrides.clone(),
            set: Box::new(set.clone()),
        };
        self.write(&mut inner, &event)?;
        Ok((session_id, turn))
    }

    /// Records that the user accepted `app` in `turn`. Accepting the same app
    /// again writes nothing.
    pub async fn accept(&self, session_id: &str, turn: usize, app: &str) -> Result<String, SessionError> {
        let mut inner = self.inner.lock().await;
        let record = inner
            .sessions
            .get(session_id)
            .ok_or_else(|| SessionError::UnknownSession(session_id.to_string()))?;
        let t = record
            .turns
            .iter()
            .find(|t| t.turn == turn)
            .ok_or_else(|| SessionError::UnknownTurn(session_id.to_string(), turn))?;
        let app_name = t
            .set
            .recommendations
            .iter()
            .find(|r| r.app.eq_ignore_ascii_case(app.trim()))
            .map(|r| r.app.clone())
            .ok_or_else(|| SessionError::UnknownApp {
                turn,
                app: app.to_string(),
            })?;
        if t.accepted_app.as_deref() == Some(app_name.as_str()) {
            return Ok(app_name);
        }
        let event = SessionEvent::Feedback {
            session_id: session_id.to_string(),
            turn,
            timestamp: Utc::now(),
            accepted_app: app_name.clone(),
        };
        self.write(&mut inner, &event)?;
        Ok(app_name)
    }

    pub async fn get(&self, session_id: &str) -> Option<SessionRecord> {
        self.inner.lock().await.sessions.get(session_id).cloned()
    }
}
