//! On-disk event log format (version 1).
//!
//! ```text
//! header   8 bytes  magic "FPEVLOG\0"
//!          2 bytes  format version, u16 little-endian (= 1)
//!          2 bytes  reserved, zero
//! record   4 bytes  payload length N, u32 little-endian
//!          4 bytes  CRC-32 (IEEE) of the payload, u32 little-endian
//!          N bytes  payload: one JSON-encoded `StoredEvent`
//! ```
//!
//! Records are appended and never rewritten. Sequence numbers start at 0
//! and increase by one per record.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;

use thiserror::Error;

use super::StoredEvent;

pub const LOG_MAGIC: &[u8; 8] = b"FPEVLOG\0";
pub const LOG_VERSION: u16 = 1;
const HEADER_LEN: usize = 12;

#[derive(Debug, Error, PartialEq)]
pub enum LogError {
    #[error("missing or unrecognized header")]
    BadMagic,
    #[error("unsupported log format version {0}")]
    UnsupportedVersion(u16),
    #[error("truncated record at byte {0}")]
    Truncated(usize),
    #[error("checksum mismatch in record at byte {0}")]
    Checksum(usize),
    #[error("undecodable record at byte {offset}: {message}")]
    Decode { offset: usize, message: String },
    #[error("expected sequence number {expected}, found {found}")]
    Sequence { expected: u64, found: u64 },
    #[error("inconsistent event #{seq}: {message}")]
    Inconsistent { seq: u64, message: String },
}

pub fn encode_header() -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN);
    out.extend_from_slice(LOG_MAGIC);
    out.extend_from_slice(&LOG_VERSION.to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes());
    out
}

pub fn encode_record(event: &StoredEvent) -> Vec<u8> {
    let payload = serde_json::to_vec(event).expect("events always serialize");
    let mut out = Vec::with_capacity(payload.len() + 8);
    out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    out.extend_from_slice(&crc32fast::hash(&payload).to_le_bytes());
    out.extend_from_slice(&payload);
    out
}

/// Parses a complete log. Any trailing partial record is an error.
pub fn decode_log(bytes: &[u8]) -> Result<Vec<StoredEvent>, LogError> {
    if bytes.len() < HEADER_LEN || &bytes[..8] != LOG_MAGIC {
        return Err(LogError::BadMagic);
    }
    let version = u16::from_le_bytes([bytes[8], bytes[9]]);
    if version != LOG_VERSION {
        return Err(LogError::UnsupportedVersion(version));
    }
    let mut events = Vec::new();
    let mut offset = HEADER_LEN;
    while offset < bytes.len() {
        let Some(head) = bytes.get(offset..offset + 8) else {
            return Err(LogError::Truncated(offset));
        };
        let len = u32::from_le_bytes(head[..4].try_into().expect("4 bytes")) as usize;
        let crc = u32::from_le_bytes(head[4..].try_into().expect("4 bytes"));
        let Some(payload) = bytes.get(offset + 8..offset + 8 + len) else {
            return Err(LogError::Truncated(offset));
        };
        if crc32fast::hash(payload) != crc {
            return Err(LogError::Checksum(offset));
        }
        let event: StoredEvent = serde_json::from_slice(payload).map_err(|e| LogError::Decode {
            offset,
            message: e.to_string(),
        })?;
        let expected = events.len() as u64;
        if event.seq != expected {
            return Err(LogError::Sequence {
                expected,
                found: event.seq,
            });
        }
        events.push(event);
        offset += 8 + len;
    }
    Ok(events)
}

/// Appends records to a log file, flushing after each one.
#[derive(Debug)]
pub struct LogWriter {
    file: File,
}

impl LogWriter {
    /// Creates a new log; fails if the file already exists.
    pub fn create(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let mut file = OpenOptions::new().write(true).create_new(true).open(path)?;
        file.write_all(&encode_header())?;
        file.flush()?;
        Ok(LogWriter { file })
    }

    pub fn append_to(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let file = OpenOptions::new().append(true).open(path)?;
        Ok(LogWriter { file })
    }

    pub fn append(&mut self, event: &StoredEvent) -> std::io::Result<()> {
        self.file.write_all(&encode_record(event))?;
        self.file.flush()
    }
}
