//! Binary event-file format: a 4-byte magic, a version word, a
//! length-prefixed JSON header, then fixed-width little-endian records of
//! 12 bytes each (timestamp_us: u64, channel: u8, polarity: u8,
//! gain_index: u8, pad: u8).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adm::{Polarity, SpikeEvent};
use crate::error::{CochleaError, Result};

pub const MAGIC: [u8; 4] = *b"CSPK";
pub const VERSION: u32 = 1;
pub const RECORD_BYTES: usize = 12;

/// Self-describing header; fully determines how to decode the records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventFileHeader {
    pub sample_rate_hz: f64,
    pub num_channels: u8,
    pub agc_on: bool,
    pub delta: f64,
    pub gain_table_db: Vec<f64>,
    pub amplitude_mv: f64,
    /// 0 = noise, 1 = speech, absent for unlabeled recordings.
    pub label: Option<u8>,
    pub source_id: String,
}

fn polarity_byte(p: Polarity) -> u8 {
    match p {
        Polarity::Off => 0,
        Polarity::On => 1,
    }
}

fn byte_polarity(b: u8) -> Result<Polarity> {
    match b {
        0 => Ok(Polarity::Off),
        1 => Ok(Polarity::On),
        other => Err(CochleaError::MalformedEventFile(format!(
            "polarity byte {other}"
        ))),
    }
}

pub fn write_events(path: &Path, header: &EventFileHeader, events: &[SpikeEvent]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let header_json = serde_json::to_vec(header)?;
    w.write_all(&(header_json.len() as u32).to_le_bytes())?;
    w.write_all(&header_json)?;
    for ev in events {
        w.write_all(&ev.timestamp_us.to_le_bytes())?;
        w.write_all(&[ev.channel, polarity_byte(ev.polarity), ev.gain_index, 0])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_events(path: &Path) -> Result<(EventFileHeader, Vec<SpikeEvent>)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| CochleaError::MalformedEventFile("truncated magic".into()))?;
    if magic != MAGIC {
        return Err(CochleaError::MalformedEventFile(format!(
            "bad magic {magic:?}"
        )));
    }
    let mut word = [0u8; 4];
    r.read_exact(&mut word)
        .map_err(|_| CochleaError::MalformedEventFile("truncated version".into()))?;
    let version = u32::from_le_bytes(word);
    if version != VERSION {
        return Err(CochleaError::MalformedEventFile(format!(
            "unsupported version {version}"
        )));
    }
    r.read_exact(&mut word)
        .map_err(|_| CochleaError::MalformedEventFile("truncated header length".into()))?;
    let header_len = u32::from_le_bytes(word) as usize;
    let mut header_json = vec![0u8; header_len];
    r.read_exact(&mut header_json)
        .map_err(|_| CochleaError::MalformedEventFile("truncated header".into()))?;
    let header: EventFileHeader = serde_json::from_slice(&header_json)?;

    let mut body = Vec::new();
    r.read_to_end(&mut body)?;
    if body.len() % RECORD_BYTES != 0 {
        return Err(CochleaError::MalformedEventFile(format!(
            "{} trailing bytes",
            body.len() % RECORD_BYTES
        )));
    }
    let mut events = Vec::with_capacity(body.len() / RECORD_BYTES);
    for rec in body.chunks_exact(RECORD_BYTES) {
        let timestamp_us = u64::from_le_bytes(rec[0..8].try_into().expect("8 bytes"));
        let channel = rec[8];
        if channel >= header.num_channels {
            return Err(CochleaError::MalformedEventFile(format!(
                "channel {channel} >= {}",
                header.num_channels
            )));
        }
        events.push(SpikeEvent {
            timestamp_us,
            channel,
            polarity: byte_polarity(rec[9])?,
            gain_index: rec[10],
        });
    }
    Ok((header, events))
}
