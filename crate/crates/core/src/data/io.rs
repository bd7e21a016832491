//! NDR1 binary container and the CSV alternative.
//!
//! NDR1 layout, all little-endian:
//!
//! ```text
//! "NDR1" | u32 C | u32 bin_us | u64 T | T×C u8 spike counts (time-major) | T×2 f32 velocities
//! ```

use std::fs;
use std::path::Path;

use super::{Recording, DEFAULT_BIN_US};
use crate::error::{ParseError, Result};

pub const NDR_MAGIC: [u8; 4] = *b"NDR1";
const HEADER: usize = 20;

pub fn to_ndr_bytes(r: &Recording) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER + r.spikes.len() + r.velocities.len() * 4);
    out.extend_from_slice(&NDR_MAGIC);
    out.extend_from_slice(&(r.channels as u32).to_le_bytes());
    out.extend_from_slice(&r.bin_us.to_le_bytes());
    out.extend_from_slice(&(r.len() as u64).to_le_bytes());
    out.extend_from_slice(&r.spikes);
    for v in &r.velocities {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn parse_ndr(bytes: &[u8]) -> Result<Recording> {
    if bytes.len() < 4 {
        return Err(ParseError::Truncated {
            section: "header",
            expected: HEADER as u64,
            actual: bytes.len() as u64,
        }
        .into());
    }
    let magic: [u8; 4] = bytes[..4].try_into().expect("4 bytes");
    if magic != NDR_MAGIC {
        return Err(ParseError::BadMagic(magic).into());
    }
    if bytes.len() < HEADER {
        return Err(ParseError::Truncated {
            section: "header",
            expected: HEADER as u64,
            actual: bytes.len() as u64,
        }
        .into());
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
    let channels = u32_at(4) as u64;
    let bin_us = u32_at(8);
    let t = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes"));

    let overflow = || ParseError::Overflow(format!("T={t} × C={channels} does not fit in memory"));
    let n_spikes = t.checked_mul(channels).ok_or_else(overflow)?;
    let n_vel = t.checked_mul(8).ok_or_else(overflow)?;
    let spikes_end = (HEADER as u64).checked_add(n_spikes).ok_or_else(overflow)?;
    let total = spikes_end.checked_add(n_vel).ok_or_else(overflow)?;
    usize::try_from(total).map_err(|_| overflow())?;

    let len = bytes.len() as u64;
    if len < spikes_end {
        return Err(ParseError::Truncated {
            section: "spike block",
            expected: n_spikes,
            actual: len - HEADER as u64,
        }
        .into());
    }
    if len < total {
        return Err(ParseError::Truncated {
            section: "velocity block",
            expected: n_vel,
            actual: len - spikes_end,
        }
        .into());
    }
    if len > total {
        return Err(ParseError::Invalid(format!("{} trailing bytes", len - total)).into());
    }
    let spikes = bytes[HEADER..spikes_end as usize].to_vec();
    let velocities = bytes[spikes_end as usize..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Recording::new(bin_us, channels as usize, spikes, velocities)
}

pub fn save_ndr(r: &Recording, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, to_ndr_bytes(r))?;
    Ok(())
}

pub fn load_ndr(path: impl AsRef<Path>) -> Result<Recording> {
    parse_ndr(&fs::read(path)?)
}

fn csv_err(e: impl std::fmt::Display) -> ParseError {
    ParseError::Csv(e.to_string())
}

/// Header `t,ch0,…,ch{C-1},vx,vy`, one row per bin.
pub fn save_csv(r: &Recording, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut header = vec!["t".to_string()];
    header.extend((0..r.channels).map(|c| format!("ch{c}")));
    header.extend(["vx".to_string(), "vy".to_string()]);
    w.write_record(&header).map_err(csv_err)?;
    let c = r.channels;
    for t in 0..r.len() {
        let mut row = vec![t.to_string()];
        row.extend(r.spikes[t * c..(t + 1) * c].iter().map(|v| v.to_string()));
        row.push(r.velocities[2 * t].to_string());
        row.push(r.velocities[2 * t + 1].to_string());
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the CSV form; the bin width is taken to be 4 ms.
pub fn load_csv(path: impl AsRef<Path>) -> Result<Recording> {
    let mut rd = csv::Reader::from_path(path).map_err(csv_err)?;
    let header = rd.headers().map_err(csv_err)?.clone();
    let n = header.len();
    let ok = n >= 4
        && &header[0] == "t"
        && &header[n - 2] == "vx"
        && &header[n - 1] == "vy"
        && (1..n - 2).all(|i| header[i] == format!("ch{}", i - 1));
    if !ok {
        return Err(csv_err("header must be t,ch0..chN,vx,vy").into());
    }
    let c = n - 3;
    let mut spikes = Vec::new();
    let mut velocities = Vec::new();
    for (line, rec) in rd.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        if rec.len() != n {
            return Err(csv_err(format!("row {line} has {} fields, expected {n}", rec.len())).into());
        }
        let t: usize = rec[0].trim().parse().map_err(|e| csv_err(format!("row {line} t: {e}")))?;
        if t != line {
            return Err(csv_err(format!("row {line} has t = {t}")).into());
        }
        for i in 1..=c {
            let v: u8 = rec[i]
                .trim()
                .parse()
                .map_err(|e| csv_err(format!("row {line} ch{}: {e}", i - 1)))?;
            spikes.push(v);
        }
        for i in [n - 2, n - 1] {
            let v: f32 = rec[i].trim().parse().map_err(|e| csv_err(format!("row {line}: {e}")))?;
            velocities.push(v);
        }
    }
    Recording::new(DEFAULT_BIN_US, c, spikes, velocities)
}

/// Dispatches on extension: `.csv` is CSV, anything else NDR1.
pub fn load_recording(path: impl AsRef<Path>) -> Result<Recording> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("csv") => load_csv(path),
        _ => load_ndr(path),
    }
}
