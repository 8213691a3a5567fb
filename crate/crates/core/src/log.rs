//! Session log files: JSON Lines, one record per line.
//!
//! ```text
//! {"record":"format","format":"rehab-session-log","version":1}
//! {"record":"header", ...session fields...}
//! {"record":"rep", ...one per repetition...}
//! {"record":"end","reps":K}
//! ```
//!
//! Floats are written with shortest round-trip formatting, so reloading a
//! log and rescoring it reproduces the stored metrics bit for bit.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::session::{RepTrace, SessionRecord};

pub const FORMAT_NAME: &str = "rehab-session-log";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize)]
#[serde(tag = "record", rename_all = "lowercase")]
enum LineOut<'a> {
    Format { format: &'a str, version: u32 },
    Header(&'a SessionRecord),
    Rep(&'a RepTrace),
    End { reps: usize },
}

#[derive(Deserialize)]
#[serde(tag = "record", rename_all = "lowercase")]
enum LineIn {
    Format { format: String, version: u32 },
    Header(Box<SessionRecord>),
    Rep(RepTrace),
    End { reps: usize },
}

fn json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string(value).map_err(|e| Error::CorruptLog(e.to_string()))
}

pub fn write_session<W: Write>(mut w: W, record: &SessionRecord) -> Result<()> {
    writeln!(w, "{}", json(&LineOut::Format { format: FORMAT_NAME, version: FORMAT_VERSION })?)?;
    writeln!(w, "{}", json(&LineOut::Header(record))?)?;
    for rep in &record.traces {
        writeln!(w, "{}", json(&LineOut::Rep(rep))?)?;
    }
    writeln!(w, "{}", json(&LineOut::End { reps: record.traces.len() })?)?;
    w.flush()?;
    Ok(())
}

pub fn read_session<R: BufRead>(r: R) -> Result<SessionRecord> {
    let mut lines = r.lines().enumerate();
    let mut next = |what: &str| -> Result<(usize, LineIn)> {
        let (i, line) = lines.next().ok_or_else(|| Error::CorruptLog(format!("log ends before {what}")))?;
        let line = line?;
        let parsed = serde_json::from_str(&line).map_err(|e| Error::CorruptLog(format!("line {}: {e}", i + 1)))?;
        Ok((i, parsed))
    };
    match next("format line")? {
        (_, LineIn::Format { format, version }) => {
            if format != FORMAT_NAME {
                return Err(Error::CorruptLog(format!("unknown log format {format:?}")));
            }
            if version != FORMAT_VERSION {
                return Err(Error::VersionMismatch { found: version, expected: FORMAT_VERSION });
            }
        }
        (i, _) => return Err(Error::CorruptLog(format!("line {}: expected format record", i + 1))),
    }
    let mut record = match next("header")? {
        (_, LineIn::Header(h)) => *h,
        (i, _) => return Err(Error::CorruptLog(format!("line {}: expected header record", i + 1))),
    };
    loop {
        match next("end record")? {
            (_, LineIn::Rep(rep)) => record.traces.push(rep),
            (i, LineIn::End { reps }) => {
                if reps != record.traces.len() || reps != record.reps {
                    return Err(Error::CorruptLog(format!(
                        "line {}: end record announces {reps} repetitions, found {}",
                        i + 1,
                        record.traces.len()
                    )));
                }
                return Ok(record);
            }
            (i, _) => return Err(Error::CorruptLog(format!("line {}: unexpected record", i + 1))),
        }
    }
}

pub fn persist(record: &SessionRecord, path: &Path) -> Result<()> {
    write_session(BufWriter::new(File::create(path)?), record)
}

pub fn load(path: &Path) -> Result<SessionRecord> {
    read_session(BufReader::new(File::open(path)?))
}

/// File name used for session `n` when writing a directory of logs.
pub fn session_file_name(n: u32) -> String {
    format!("session-{n:03}.jsonl")
}
