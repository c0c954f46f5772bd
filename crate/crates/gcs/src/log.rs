//! Append-only event log: one JSON record per line, dense ascending `seq`
//! starting at 1.

use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use watercare_core::protocol::Message;
use watercare_core::Waypoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EventKind {
    Telemetry,
    Alert,
    Command,
    Ack,
    System,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EventBody {
    /// A decoded frame as received.
    Message {
        sys_id: u8,
        comp_id: u8,
        seq: u8,
        message: Message,
    },
    /// Mission upload sent to the bot.
    MissionUpload { waypoints: Vec<Waypoint> },
    /// Operator command sent to the bot.
    Command { cmd: String, code: u8 },
    /// A request that ended without a bot acknowledgement.
    Outcome {
        request: String,
        accepted: bool,
        reason: String,
    },
    Notice {
        text: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sys_id: Option<u8>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub seq: u64,
    pub t_ms: u64,
    pub kind: EventKind,
    pub body: EventBody,
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {reason}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        reason: String,
    },
}

pub struct EventLog {
    records: Vec<EventRecord>,
    writer: Option<(PathBuf, BufWriter<File>)>,
}

impl EventLog {
    pub fn in_memory() -> Self {
        Self {
            records: Vec::new(),
            writer: None,
        }
    }

    /// Opens or creates a log file, loading every existing record. A torn
    /// final line without a newline is cut off; any other damage is an error.
    pub fn open(path: &Path) -> Result<Self, LogError> {
        let io_err = |source| LogError::Io {
            path: path.to_path_buf(),
            source,
        };
        let file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(path)
            .map_err(io_err)?;

        let mut records = Vec::new();
        let mut good_len = 0u64;
        let mut reader = BufReader::new(&file);
        let mut line = String::new();
        let mut number = 0;
        loop {
            line.clear();
            let n = reader.read_line(&mut line).map_err(io_err)?;
            if n == 0 {
                break;
            }
            number += 1;
            let complete = line.ends_with('\n');
            let parsed = serde_json::from_str::<EventRecord>(line.trim_end_matches('\n'));
            match parsed {
                Ok(rec) if complete => {
                    let expected = records.len() as u64 + 1;
                    if rec.seq != expected {
                        return Err(LogError::Corrupt {
                            path: path.to_path_buf(),
                            line: number,
                            reason: format!("seq {} where {expected} was expected", rec.seq),
                        });
                    }
                    records.push(rec);
                    good_len += n as u64;
                }
                _ if !complete => break,
                Ok(_) => unreachable!(),
                Err(e) => {
                    return Err(LogError::Corrupt {
                        path: path.to_path_buf(),
                        line: number,
                        reason: e.to_string(),
                    })
                }
            }
        }
        drop(reader);
        if file.metadata().map_err(io_err)?.len() != good_len {
            tracing::warn!(path = %path.display(), "dropping torn final log line");
            file.set_len(good_len).map_err(io_err)?;
        }
        Ok(Self {
            records,
            writer: Some((path.to_path_buf(), BufWriter::new(file))),
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last_seq(&self) -> u64 {
        self.records.len() as u64
    }

    pub fn records(&self) -> &[EventRecord] {
        &self.records
    }

    pub fn append(&mut self, t_ms: u64, kind: EventKind, body: EventBody) -> io::Result<&EventRecord> {
        let rec = EventRecord {
            seq: self.last_seq() + 1,
            t_ms,
            kind,
            body,
        };
        if let Some((_, w)) = self.writer.as_mut() {
            let mut line = serde_json::to_vec(&rec).map_err(io::Error::other)?;
            line.push(b'\n');
            w.write_all(&line)?;
        }
        self.records.push(rec);
        Ok(self.records.last().expect("just pushed"))
    }

    /// Records with `seq > since`, ascending, at most `limit`.
    pub fn since(&self, since: u64, limit: usize) -> &[EventRecord] {
        let start = (since as usize).min(self.records.len());
        let end = start.saturating_add(limit).min(self.records.len());
        &self.records[start..end]
    }

    pub fn flush(&mut self) -> io::Result<()> {
        match self.writer.as_mut() {
            Some((_, w)) => w.flush(),
            None => Ok(()),
        }
    }

    pub fn path(&self) -> Option<&Path> {
        self.writer.as_ref().map(|(p, _)| p.as_path())
    }
}

impl Drop for EventLog {
    fn drop(&mut self) {
        let _ = self.flush();
    }
}
