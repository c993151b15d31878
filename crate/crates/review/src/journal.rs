//! Append-only JSONL journal with periodic snapshots.
//!
//! `journal.jsonl` holds one [`JournalEntry`] per line with contiguous
//! sequence numbers starting at 1. `snapshot.json` holds the [`Store`] as of
//! some sequence number; on open the snapshot is loaded and later entries are
//! replayed. A torn final line left by a crash is cut off.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::session::{Decision, ReviewSession, SessionError};
use crate::trust::{TrustEvent, TrustMonitor};

pub const JOURNAL_FILE: &str = "journal.jsonl";
pub const SNAPSHOT_FILE: &str = "snapshot.json";

#[derive(Debug, Error)]
pub enum JournalError {
    #[error("journal io error at {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("journal corrupt at line {line}: {message}")]
    Corrupt { line: usize, message: String },
    #[error("snapshot corrupt: {0}")]
    Snapshot(String),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum JournalEvent {
    SessionCreated { session: ReviewSession },
    Decision { session_id: String, decision: Decision },
    Finalized { session_id: String, at: DateTime<Utc> },
    Trust { event: TrustEvent, at: DateTime<Utc> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JournalEntry {
    pub seq: u64,
    #[serde(flatten)]
    pub event: JournalEvent,
}

/// Everything the service persists.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Store {
    pub sessions: BTreeMap<String, ReviewSession>,
    pub trust: TrustMonitor,
    pub next_session: u64,
}

impl Store {
    /// Would `apply` succeed? Leaves the store untouched.
    pub fn check(&self, event: &JournalEvent) -> Result<(), SessionError> {
        match event {
            JournalEvent::SessionCreated { session } => {
                if self.sessions.contains_key(&session.session_id) {
                    return Err(SessionError::Conflict(format!("session {} exists", session.session_id)));
                }
            }
            JournalEvent::Decision { session_id, decision } => {
                let s = self.session(session_id)?;
                let sub = crate::session::DecisionSubmission {
                    case_id: decision.case_id.clone(),
                    diagnosis: decision.diagnosis,
                    ihc_required: decision.ihc_required,
                    note: decision.note.clone(),
                };
                s.check_decision(&decision.reviewer_id, &sub)?;
            }
            JournalEvent::Finalized { session_id, .. } => {
                self.session(session_id)?;
            }
            JournalEvent::Trust { event, at } => {
                self.trust.clone().update(event, *at).map_err(SessionError::Invalid)?;
            }
        }
        Ok(())
    }

    pub fn apply(&mut self, event: JournalEvent) -> Result<(), SessionError> {
        self.check(&event)?;
        match event {
            JournalEvent::SessionCreated { session } => {
                self.next_session += 1;
                self.sessions.insert(session.session_id.clone(), session);
            }
            JournalEvent::Decision { session_id, decision } => {
                let s = self.sessions.get_mut(&session_id).expect("checked");
                s.decisions.push(decision);
            }
            JournalEvent::Finalized { session_id, at } => {
                self.sessions.get_mut(&session_id).expect("checked").finalize(at);
            }
            JournalEvent::Trust { event, at } => {
                self.trust.update(&event, at).map_err(SessionError::Invalid)?;
            }
        }
        Ok(())
    }

    pub fn session(&self, id: &str) -> Result<&ReviewSession, SessionError> {
        self.sessions.get(id).ok_or_else(|| SessionError::NotFound(format!("session {id}")))
    }
}

#[derive(Debug, Deserialize)]
struct Snapshot {
    seq: u64,
    store: Store,
}

#[derive(Serialize)]
struct SnapshotRef<'a> {
    seq: u64,
    store: &'a Store,
}

#[derive(Debug)]
pub struct Journal {
    dir: PathBuf,
    file: File,
    seq: u64,
    snapshot_every: u64,
    since_snapshot: u64,
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> JournalError + '_ {
    move |source| JournalError::Io { path: path.to_path_buf(), source }
}

/// Parses `bytes` as journal lines. Returns the valid entries and the byte
/// length of the valid prefix. Only the final line may be torn.
pub fn parse_entries(bytes: &[u8]) -> Result<(Vec<JournalEntry>, usize), JournalError> {
    let mut entries = Vec::new();
    let mut valid = 0;
    let mut expected = None::<u64>;
    let mut line_no = 0;
    let mut rest = bytes;
    while !rest.is_empty() {
        line_no += 1;
        let Some(nl) = rest.iter().position(|&b| b == b'\n') else {
            break; // torn: no terminating newline
        };
        let line = &rest[..nl];
        rest = &rest[nl + 1..];
        let parsed = serde_json::from_slice::<JournalEntry>(line);
        match parsed {
            Ok(e) => {
                if let Some(want) = expected {
                    if e.seq != want {
                        return Err(JournalError::Corrupt {
                            line: line_no,
                            message: format!("sequence {} after {}", e.seq, want - 1),
                        });
                    }
                }
                expected = Some(e.seq + 1);
                valid += nl + 1;
                entries.push(e);
            }
            Err(_) if rest.is_empty() => break,
            Err(e) => return Err(JournalError::Corrupt { line: line_no, message: e.to_string() }),
        }
    }
    Ok((entries, valid))
}

impl Journal {
    /// Opens or creates the journal in `dir` and rebuilds the store.
    pub fn open(dir: &Path, snapshot_every: u64) -> Result<(Journal, Store), JournalError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let snap_path = dir.join(SNAPSHOT_FILE);
        let (mut store, snap_seq) = match fs::read(&snap_path) {
            Ok(bytes) => {
                let s: Snapshot =
                    serde_json::from_slice(&bytes).map_err(|e| JournalError::Snapshot(e.to_string()))?;
                (s.store, s.seq)
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => (Store::default(), 0),
            Err(e) => return Err(io_err(&snap_path)(e)),
        };
        let path = dir.join(JOURNAL_FILE);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(io_err(&path)(e)),
        };
        let (entries, valid) = parse_entries(&bytes)?;
        if let Some(first) = entries.first() {
            if first.seq != 1 {
                return Err(JournalError::Corrupt { line: 1, message: format!("first sequence is {}", first.seq) });
            }
        }
        let last = entries.last().map_or(0, |e| e.seq);
        if last < snap_seq {
            return Err(JournalError::Snapshot(format!("snapshot at {snap_seq} is ahead of journal end {last}")));
        }
        for (i, e) in entries.into_iter().enumerate().filter(|(_, e)| e.seq > snap_seq) {
            store
                .apply(e.event)
                .map_err(|err| JournalError::Corrupt { line: i + 1, message: err.to_string() })?;
        }
        let file = OpenOptions::new().create(true).read(true).write(true).truncate(false).open(&path).map_err(io_err(&path))?;
        if valid < bytes.len() {
            file.set_len(valid as u64).map_err(io_err(&path))?;
        }
        let mut file = file;
        io::Seek::seek(&mut file, io::SeekFrom::End(0)).map_err(io_err(&path))?;
        let journal = Journal {
            dir: dir.to_path_buf(),
            file,
            seq: last,
            snapshot_every: snapshot_every.max(1),
            since_snapshot: last - snap_seq,
        };
        Ok((journal, store))
    }

    pub fn seq(&self) -> u64 {
        self.seq
    }

    /// Appends and syncs one entry.
    pub fn append(&mut self, event: &JournalEvent) -> Result<u64, JournalError> {
        let entry = JournalEntry { seq: self.seq + 1, event: event.clone() };
        let mut line = serde_json::to_vec(&entry)?;
        line.push(b'\n');
        let path = self.dir.join(JOURNAL_FILE);
        self.file.write_all(&line).map_err(io_err(&path))?;
        self.file.sync_data().map_err(io_err(&path))?;
        self.seq += 1;
        self.since_snapshot += 1;
        Ok(self.seq)
    }

    /// Writes a snapshot of `store` (which must reflect every appended entry)
    /// once `snapshot_every` entries have accumulated.
    pub fn maybe_snapshot(&mut self, store: &Store) -> Result<bool, JournalError> {
        if self.since_snapshot < self.snapshot_every {
            return Ok(false);
        }
        self.snapshot(store)?;
        Ok(true)
    }

    pub fn snapshot(&mut self, store: &Store) -> Result<(), JournalError> {
        let tmp = self.dir.join(format!("{SNAPSHOT_FILE}.tmp"));
        let bytes = serde_json::to_vec(&SnapshotRef { seq: self.seq, store })?;
        let mut f = File::create(&tmp).map_err(io_err(&tmp))?;
        f.write_all(&bytes).map_err(io_err(&tmp))?;
        f.sync_all().map_err(io_err(&tmp))?;
        let dst = self.dir.join(SNAPSHOT_FILE);
        fs::rename(&tmp, &dst).map_err(io_err(&dst))?;
        self.since_snapshot = 0;
        Ok(())
    }
}
