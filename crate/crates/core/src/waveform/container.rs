//! `RCVR` waveform containers and the CSV import path.
//!
//! Binary layout (little-endian): magic `RCVR`, version `u32`, record count
//! `u64`, then per record: id (`u32` length + UTF-8 bytes), label `u8`
//! (0 noise, 1 event, 255 unlabeled), onset `i64` (-1 if absent), sample
//! rate `f64`, `N` as `u32`, and `3 * N` `f32` values, channel-major.

use std::fs;
use std::path::Path;

use super::{Label, Waveform, CHANNELS, DEFAULT_SAMPLE_RATE_HZ};
use crate::error::{Error, Result};

pub const CONTAINER_MAGIC: &[u8; 4] = b"RCVR";
pub const CONTAINER_VERSION: u32 = 1;

fn label_byte(label: Option<Label>) -> u8 {
    match label {
        Some(Label::Noise) => 0,
        Some(Label::Event) => 1,
        None => 255,
    }
}

pub fn encode_container(records: &[Waveform]) -> Vec<u8> {
    let payload: usize = records.iter().map(|r| r.samples().len() * 4 + r.id.len() + 32).sum();
    let mut out = Vec::with_capacity(16 + payload);
    out.extend_from_slice(CONTAINER_MAGIC);
    out.extend_from_slice(&CONTAINER_VERSION.to_le_bytes());
    out.extend_from_slice(&(records.len() as u64).to_le_bytes());
    for r in records {
        out.extend_from_slice(&(r.id.len() as u32).to_le_bytes());
        out.extend_from_slice(r.id.as_bytes());
        out.push(label_byte(r.label));
        let onset = r.onset_index.map_or(-1i64, |o| o as i64);
        out.extend_from_slice(&onset.to_le_bytes());
        out.extend_from_slice(&r.sample_rate_hz.to_le_bytes());
        out.extend_from_slice(&(r.len() as u32).to_le_bytes());
        for v in r.samples() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::format(
                "RCVR",
                format!("truncated while reading {what} at byte {}", self.pos),
            ));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        Ok(self.take(N, what)?.try_into().unwrap())
    }
}

/// Decodes a container. The outer error is fatal (bad header or truncation);
/// each inner result carries a per-record validation outcome.
pub fn decode_container(bytes: &[u8]) -> Result<Vec<Result<Waveform>>> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if &r.array::<4>("magic")? != CONTAINER_MAGIC {
        return Err(Error::format("RCVR", "bad magic"));
    }
    let version = u32::from_le_bytes(r.array("version")?);
    if version != CONTAINER_VERSION {
        return Err(Error::format("RCVR", format!("unsupported version {version}")));
    }
    let count = u64::from_le_bytes(r.array("record count")?);
    let mut out = Vec::new();
    for i in 0..count {
        let id_len = u32::from_le_bytes(r.array("id length")?) as usize;
        let id = String::from_utf8(r.take(id_len, "id")?.to_vec())
            .map_err(|_| Error::format("RCVR", format!("record {i}: id is not UTF-8")))?;
        let label_raw = r.array::<1>("label")?[0];
        let onset = i64::from_le_bytes(r.array("onset")?);
        let fs = f64::from_le_bytes(r.array("sample rate")?);
        let n = u32::from_le_bytes(r.array("sample count")?) as usize;
        let raw = r.take(n * CHANNELS * 4, &format!("samples of record `{id}`"))?;
        let samples: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let label = match label_raw {
            0 => Ok(Some(Label::Noise)),
            1 => Ok(Some(Label::Event)),
            255 => Ok(None),
            other => Err(Error::Record {
                id: id.clone(),
                reason: format!("unknown label byte {other}"),
            }),
        };
        let record = label.and_then(|label| {
            let onset = if onset < 0 { None } else { Some(onset as usize) };
            Waveform::new(id, samples, fs, label, onset)
        });
        out.push(record);
    }
    if r.pos != bytes.len() {
        return Err(Error::format(
            "RCVR",
            format!("{} trailing bytes after {count} records", bytes.len() - r.pos),
        ));
    }
    Ok(out)
}

pub fn write_container(path: &Path, records: &[Waveform]) -> Result<()> {
    fs::write(path, encode_container(records)).map_err(|e| Error::io(path, e))
}

pub fn read_container(path: &Path) -> Result<Vec<Result<Waveform>>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_container(&bytes)
}

/// CSV import: header `id,label,onset,ch,t0,t1,...`, one row per channel.
/// Rows of one record must be contiguous and cover channels `0..3`.
pub fn read_csv_records(path: &Path) -> Result<Vec<Result<Waveform>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::format("CSV", e.to_string()))?;
    let header = rdr
        .headers()
        .map_err(|e| Error::format("CSV", e.to_string()))?
        .clone();
    let head: Vec<&str> = header.iter().map(str::trim).take(4).collect();
    if head != ["id", "label", "onset", "ch"] {
        return Err(Error::format("CSV", format!("expected header id,label,onset,ch,t0,..., got {head:?}")));
    }

    struct Pending {
        id: String,
        label: String,
        onset: String,
        channels: Vec<Option<Vec<f32>>>,
        error: Option<String>,
    }

    fn finish(p: Pending) -> Result<Waveform> {
        let id = p.id;
        let fail = |reason: String| Error::Record { id: id.clone(), reason };
        if let Some(e) = p.error {
            return Err(fail(e));
        }
        let label = Label::parse(&p.label).ok_or_else(|| fail(format!("unknown label `{}`", p.label)))?;
        let onset = match p.onset.trim() {
            "" | "-1" => None,
            s => Some(s.parse::<usize>().map_err(|_| fail(format!("bad onset `{s}`")))?),
        };
        let mut samples = Vec::new();
        let mut len = None;
        for (c, ch) in p.channels.into_iter().enumerate() {
            let ch = ch.ok_or_else(|| fail(format!("missing channel {c}")))?;
            match len {
                None => len = Some(ch.len()),
                Some(n) if n != ch.len() => {
                    return Err(fail(format!("channel {c} has {} samples, channel 0 has {n}", ch.len())))
                }
                _ => {}
            }
            samples.extend(ch);
        }
        Waveform::new(id.clone(), samples, DEFAULT_SAMPLE_RATE_HZ, label, onset)
    }

    let mut out = Vec::new();
    let mut current: Option<Pending> = None;
    for row in rdr.records() {
        let row = row.map_err(|e| Error::format("CSV", e.to_string()))?;
        let id = row.get(0).unwrap_or("").trim().to_string();
        if current.as_ref().is_none_or(|p| p.id != id) {
            if let Some(p) = current.take() {
                out.push(finish(p));
            }
            current = Some(Pending {
                id: id.clone(),
                label: row.get(1).unwrap_or("").to_string(),
                onset: row.get(2).unwrap_or("").to_string(),
                channels: vec![None; CHANNELS],
                error: None,
            });
        }
        let p = current.as_mut().unwrap();
        let ch = row.get(3).unwrap_or("").trim();
        let values: std::result::Result<Vec<f32>, _> =
            row.iter().skip(4).map(|v| v.trim().parse::<f32>()).collect();
        match (ch.parse::<usize>(), values) {
            (Ok(c), Ok(v)) if c < CHANNELS => p.channels[c] = Some(v),
            (Ok(c), Ok(_)) => p.error = Some(format!("channel index {c} out of range")),
            (Err(_), _) => p.error = Some(format!("bad channel index `{ch}`")),
            (_, Err(e)) => p.error = Some(format!("bad sample value: {e}")),
        }
    }
    if let Some(p) = current.take() {
        out.push(finish(p));
    }
    Ok(out)
}
