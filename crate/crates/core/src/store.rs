//! Per-user append-only event logs.
//!
//! Each user has one `user-<id>.ndjsonl` file under the store root. Records
//! are appended in arrival order; one batch for one user is written with a
//! single `write_all` under that user's writer lock, so lines never
//! interleave. Readers ignore an unterminated trailing line.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use thiserror::Error;

use crate::event::{parse_event, serialize_event, wire::is_header, EventRecord, UserId, FILE_HEADER};

pub const LOG_EXTENSION: &str = "ndjsonl";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("storage failure: {0}")]
    StorageFailure(#[from] io::Error),
    #[error("unknown user {0}")]
    UnknownUser(UserId),
}

/// Outcome of one submitted batch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SubmitOutcome {
    pub accepted: usize,
    pub skipped: usize,
}

#[derive(Debug)]
pub struct EventStore {
    root: PathBuf,
    writers: Mutex<HashMap<UserId, Arc<Mutex<File>>>>,
    fsync: bool,
}

impl EventStore {
    /// Opens (creating if needed) a store rooted at `root`, syncing data to
    /// disk after every batch.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        Self::open_with_sync(root, true)
    }

    pub fn open_with_sync(root: impl Into<PathBuf>, fsync: bool) -> Result<Self, StoreError> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(EventStore { root, writers: Mutex::new(HashMap::new()), fsync })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn user_path(&self, user: UserId) -> PathBuf {
        self.root.join(format!("user-{user}.{LOG_EXTENSION}"))
    }

    fn writer(&self, user: UserId) -> Result<Arc<Mutex<File>>, StoreError> {
        let mut map = self.writers.lock().expect("writer map poisoned");
        if let Some(w) = map.get(&user) {
            return Ok(Arc::clone(w));
        }
        let mut file = OpenOptions::new().create(true).append(true).open(self.user_path(user))?;
        if file.metadata()?.len() == 0 {
            file.write_all(format!("{FILE_HEADER}\n").as_bytes())?;
        }
        let w = Arc::new(Mutex::new(file));
        map.insert(user, Arc::clone(&w));
        Ok(w)
    }

    fn append(&self, by_user: Vec<(UserId, String)>) -> Result<(), StoreError> {
        for (user, buf) in by_user {
            let w = self.writer(user)?;
            let mut file = w.lock().expect("writer poisoned");
            file.write_all(buf.as_bytes())?;
            if self.fsync {
                file.sync_data()?;
            }
        }
        Ok(())
    }

    fn group(records: impl IntoIterator<Item = EventRecord>) -> (Vec<(UserId, String)>, usize) {
        let mut by_user: BTreeMap<UserId, String> = BTreeMap::new();
        let mut n = 0;
        for r in records {
            let buf = by_user.entry(r.user_id).or_default();
            buf.push_str(&serialize_event(&r));
            buf.push('\n');
            n += 1;
        }
        (by_user.into_iter().collect(), n)
    }

    /// Appends every valid record; invalid ones are skipped and counted.
    pub fn submit_events(&self, batch: &[EventRecord]) -> Result<SubmitOutcome, StoreError> {
        let valid: Vec<EventRecord> = batch.iter().filter(|r| r.validate().is_ok()).cloned().collect();
        let skipped = batch.len() - valid.len();
        let (by_user, accepted) = Self::group(valid);
        self.append(by_user)?;
        Ok(SubmitOutcome { accepted, skipped })
    }

    /// Same as [`submit_events`](Self::submit_events) for a raw NDJSON body.
    /// Blank lines and version headers are ignored.
    pub fn submit_ndjson(&self, body: &[u8]) -> Result<SubmitOutcome, StoreError> {
        let mut valid = Vec::new();
        let mut skipped = 0;
        for line in body.split(|&b| b == b'\n') {
            if line.trim_ascii().is_empty() || is_header(line) {
                continue;
            }
            match parse_event(line) {
                Ok(r) => valid.push(r),
                Err(e) => {
                    tracing::debug!("skipping record: {e}");
                    skipped += 1;
                }
            }
        }
        let (by_user, accepted) = Self::group(valid);
        self.append(by_user)?;
        Ok(SubmitOutcome { accepted, skipped })
    }

    /// All stored records of `user`, ascending by time; equal times keep
    /// arrival order.
    pub fn export_user_log(&self, user: UserId) -> Result<Vec<EventRecord>, StoreError> {
        let path = self.user_path(user);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Err(StoreError::UnknownUser(user)),
            Err(e) => return Err(e.into()),
        };
        let mut records = read_complete_lines(&bytes);
        records.sort_by_key(|r| r.time);
        Ok(records)
    }

    pub fn users(&self) -> Result<Vec<UserId>, StoreError> {
        let mut out = Vec::new();
        for entry in fs::read_dir(&self.root)? {
            let name = entry?.file_name();
            let name = name.to_string_lossy();
            if let Some(id) = name
                .strip_prefix("user-")
                .and_then(|s| s.strip_suffix(&format!(".{LOG_EXTENSION}")))
                .and_then(|s| s.parse().ok())
            {
                out.push(id);
            }
        }
        out.sort_unstable();
        Ok(out)
    }
}

/// Parses every newline-terminated record, skipping the header and anything
/// unparsable.
fn read_complete_lines(bytes: &[u8]) -> Vec<EventRecord> {
    let complete = match bytes.iter().rposition(|&b| b == b'\n') {
        Some(i) => &bytes[..=i],
        None => return Vec::new(),
    };
    complete
        .split(|&b| b == b'\n')
        .filter(|l| !l.trim_ascii().is_empty() && !is_header(l))
        .filter_map(|l| parse_event(l).ok())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::EventKind;

    fn rec(user: UserId, time: i64, sid: u64) -> EventRecord {
        EventRecord {
            time,
            tz_offset: 0,
            user_id: user,
            window_id: None,
            session_id: sid,
            tab_id: None,
            kind: EventKind::SessionStart,
        }
    }

    #[test]
    fn three_valid_records() {
        let dir = tempfile::tempdir().unwrap();
        let store = EventStore::open(dir.path()).unwrap();
        let out = store.submit_events(&[rec(1, 5, 1), rec(1, 3, 2), rec(1, 9, 3)]).unwrap();
        assert_eq!(out.accepted, 3);
        let text = fs::read_to_string(store.user_path(1)).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert_eq!(text.lines().next(), Some(FILE_HEADER));
    }

    #[test]
    fn lenient_batches() {
        let dir = tempfile::tempdir().unwrap();
        let store = EventStore::open(dir.path()).unwrap();
        let mut bad = rec(1, 1, 1);
        bad.tz_offset = 900;
        let out = store.submit_events(&[rec(1, 1, 1), bad, rec(1, 2, 1)]).unwrap();
        assert_eq!(out, SubmitOutcome { accepted: 2, skipped: 1 });

        let body = b"{\"time\":1,\"tz\":0,\"uid\":2,\"sid\":1,\"kind\":\"session_start\"}\nnot json\n\n{\"time\":2,\"tz\":0,\"uid\":2,\"sid\":1,\"kind\":\"session_close\"}";
        let out = store.submit_ndjson(body).unwrap();
        assert_eq!(out, SubmitOutcome { accepted: 2, skipped: 1 });
    }

    #[test]
    fn export_sorts_stably() {
        let dir = tempfile::tempdir().unwrap();
        let store = EventStore::open(dir.path()).unwrap();
        store.submit_events(&[rec(1, 5, 1), rec(1, 3, 2), rec(1, 9, 3), rec(1, 5, 4)]).unwrap();
        let got: Vec<(i64, u64)> = store.export_user_log(1).unwrap().iter().map(|r| (r.time, r.session_id)).collect();
        assert_eq!(got, vec![(3, 2), (5, 1), (5, 4), (9, 3)]);
    }

    #[test]
    fn unknown_and_empty_users() {
        let dir = tempfile::tempdir().unwrap();
        let store = EventStore::open(dir.path()).unwrap();
        assert!(matches!(store.export_user_log(42), Err(StoreError::UnknownUser(42))));
        fs::write(store.user_path(42), format!("{FILE_HEADER}\n")).unwrap();
        assert!(store.export_user_log(42).unwrap().is_empty());
        assert_eq!(store.users().unwrap(), vec![42]);
    }

    #[test]
    fn torn_tail_is_ignored() {
        let bytes =
            b"{\"v\":1}\n{\"time\":1,\"tz\":0,\"uid\":2,\"sid\":1,\"kind\":\"session_start\"}\n{\"time\":2,\"tz\"";
        assert_eq!(read_complete_lines(bytes).len(), 1);
    }
}
