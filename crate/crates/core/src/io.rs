//! Reading and writing `.ndjsonl` event files.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::event::wire::is_header;
use crate::event::{parse_event, serialize_event, EventRecord, ParseError, FILE_HEADER};

#[derive(Debug, Error)]
pub enum ReadError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}:{line}: {source}", path.display())]
    Parse { path: PathBuf, line: usize, source: ParseError },
}

/// Reads a single file, or every `*.ndjsonl` / `*.ndjson` file in a
/// directory in file-name order. Header and blank lines are skipped.
pub fn read_events(path: &Path) -> Result<Vec<EventRecord>, ReadError> {
    let io_err = |source| ReadError::Io { path: path.to_path_buf(), source };
    if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)
            .map_err(io_err)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && matches!(p.extension().and_then(|x| x.to_str()), Some("ndjsonl" | "ndjson")))
            .collect();
        files.sort();
        let mut out = Vec::new();
        for f in files {
            out.extend(read_file(&f)?);
        }
        Ok(out)
    } else {
        read_file(path)
    }
}

fn read_file(path: &Path) -> Result<Vec<EventRecord>, ReadError> {
    let bytes = fs::read(path).map_err(|source| ReadError::Io { path: path.to_path_buf(), source })?;
    parse_lines(&bytes).map_err(|(line, source)| ReadError::Parse { path: path.to_path_buf(), line, source })
}

/// Parses NDJSON bytes; the error carries the 1-based line number.
pub fn parse_lines(bytes: &[u8]) -> Result<Vec<EventRecord>, (usize, ParseError)> {
    bytes
        .split(|&b| b == b'\n')
        .enumerate()
        .filter(|(_, l)| !l.trim_ascii().is_empty() && !is_header(l))
        .map(|(i, l)| parse_event(l).map_err(|e| (i + 1, e)))
        .collect()
}

/// Header line followed by one canonical record per line.
pub fn encode_events(events: &[EventRecord]) -> Vec<u8> {
    let mut out = String::with_capacity(events.len() * 96 + 8);
    out.push_str(FILE_HEADER);
    out.push('\n');
    for e in events {
        out.push_str(&serialize_event(e));
        out.push('\n');
    }
    out.into_bytes()
}

pub fn write_events(path: &Path, events: &[EventRecord]) -> io::Result<()> {
    write_bytes(path, &encode_events(events))
}

/// Creates parent directories, then writes the whole buffer.
pub fn write_bytes(path: &Path, bytes: &[u8]) -> io::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut f = fs::File::create(path)?;
    f.write_all(bytes)?;
    f.flush()
}
