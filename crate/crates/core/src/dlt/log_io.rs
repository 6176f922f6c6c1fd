//! Line-oriented log files: one JSON object per line, fields in
//! declaration order.

use std::io::{self, BufRead, Write};

use serde::{de::DeserializeOwned, Serialize};
use thiserror::Error;

use super::LedgerEntry;

#[derive(Debug, Error)]
pub enum LogIoError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        source: serde_json::Error,
    },
}

pub fn write_lines<T: Serialize, W: Write>(items: &[T], mut out: W) -> Result<(), LogIoError> {
    for item in items {
        let line = serde_json::to_string(item).map_err(|e| LogIoError::Io(e.into()))?;
        out.write_all(line.as_bytes())?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_lines<T: DeserializeOwned, R: BufRead>(input: R) -> Result<Vec<T>, LogIoError> {
    let mut items = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        items.push(
            serde_json::from_str(&line).map_err(|source| LogIoError::Parse {
                line: i + 1,
                source,
            })?,
        );
    }
    Ok(items)
}

pub fn export_log<W: Write>(log: &[LedgerEntry], out: W) -> Result<(), LogIoError> {
    write_lines(log, out)
}

pub fn import_log<R: BufRead>(input: R) -> Result<Vec<LedgerEntry>, LogIoError> {
    read_lines(input)
}
