//! BPHT binary timestamp files and the `channel,picoseconds` CSV form.
//!
//! BPHT layout: b"BPHT", u16 LE version, then 9-byte records
//! (u8 channel, u64 LE picoseconds), nondecreasing within each channel.
//! The run duration is not stored; readers take it as an argument or fall
//! back to the last timestamp + 1 ps.

use std::collections::BTreeMap;
use std::path::Path;

use crate::detection::ClickStream;
use crate::error::{Error, Result};
use crate::export::write_atomic;

pub const MAGIC: &[u8; 4] = b"BPHT";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 6;
pub const RECORD_LEN: usize = 9;

/// Serializes streams as one time-ordered record sequence (ties broken by
/// channel number).
pub fn encode_bpht(streams: &[ClickStream]) -> Result<Vec<u8>> {
    let mut seen = std::collections::HashSet::new();
    for s in streams {
        if !seen.insert(s.channel) {
            return Err(Error::InvalidInput(format!("channel {} appears twice", s.channel)));
        }
        s.check()?;
    }
    let mut recs: Vec<(u64, u8)> =
        streams.iter().flat_map(|s| s.timestamps.iter().map(move |&t| (t, s.channel))).collect();
    recs.sort_unstable();
    let mut out = Vec::with_capacity(HEADER_LEN + RECORD_LEN * recs.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for (t, ch) in recs {
        out.push(ch);
        out.extend_from_slice(&t.to_le_bytes());
    }
    Ok(out)
}

/// Parsed timestamps per channel, in file order.
pub type ChannelMap = BTreeMap<u8, Vec<u64>>;

pub fn decode_bpht(bytes: &[u8]) -> Result<ChannelMap> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::Format { offset: 0, reason: "missing BPHT magic".into() });
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format { offset: 4, reason: "truncated header".into() });
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(Error::Format { offset: 4, reason: format!("unsupported version {version}") });
    }
    let body = &bytes[HEADER_LEN..];
    let mut map = ChannelMap::new();
    for (k, rec) in body.chunks(RECORD_LEN).enumerate() {
        let offset = (HEADER_LEN + k * RECORD_LEN) as u64;
        if rec.len() < RECORD_LEN {
            return Err(Error::Format {
                offset,
                reason: format!("truncated record: {} of {RECORD_LEN} bytes", rec.len()),
            });
        }
        let ch = rec[0];
        let t = u64::from_le_bytes(rec[1..].try_into().expect("8-byte slice"));
        push_monotone(&mut map, ch, t, offset)?;
    }
    Ok(map)
}

fn push_monotone(map: &mut ChannelMap, ch: u8, t: u64, offset: u64) -> Result<()> {
    let v = map.entry(ch).or_default();
    if let Some(&prev) = v.last() {
        if t < prev {
            return Err(Error::Format {
                offset,
                reason: format!("channel {ch} goes backwards ({t} ps after {prev} ps)"),
            });
        }
    }
    v.push(t);
    Ok(())
}

/// Reads `channel,picoseconds` lines. Blank lines, `#` comments and a
/// leading non-numeric header are skipped; offsets in errors are byte
/// offsets of the offending line.
pub fn decode_csv(text: &str) -> Result<ChannelMap> {
    let mut map = ChannelMap::new();
    let mut offset = 0u64;
    let mut first = true;
    for line in text.split_inclusive('\n') {
        let here = offset;
        offset += line.len() as u64;
        let l = line.trim();
        if l.is_empty() || l.starts_with('#') {
            continue;
        }
        let mut parts = l.split(',').map(str::trim);
        let (a, b) = match (parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(b), None) => (a, b),
            _ => return Err(Error::Format { offset: here, reason: "expected two columns".into() }),
        };
        let parsed = (a.parse::<u8>(), b.parse::<u64>());
        match parsed {
            (Ok(ch), Ok(t)) => push_monotone(&mut map, ch, t, here)?,
            _ if first && a.parse::<f64>().is_err() => {}
            _ => return Err(Error::Format { offset: here, reason: format!("cannot parse '{l}'") }),
        }
        first = false;
    }
    Ok(map)
}

pub fn encode_csv(streams: &[ClickStream]) -> Result<String> {
    let bytes = encode_bpht(streams)?;
    let mut s = String::from("channel,picoseconds\n");
    for rec in bytes[HEADER_LEN..].chunks(RECORD_LEN) {
        let t = u64::from_le_bytes(rec[1..].try_into().expect("8-byte slice"));
        s.push_str(&format!("{},{}\n", rec[0], t));
    }
    Ok(s)
}

/// Turns a channel map into streams. Without an explicit duration the run
/// ends one picosecond after the last click on any channel.
pub fn into_streams(map: ChannelMap, duration: Option<u64>) -> Result<Vec<ClickStream>> {
    let last = map.values().filter_map(|v| v.last().copied()).max();
    let d = match (duration, last) {
        (Some(d), _) => d,
        (None, Some(l)) => l + 1,
        (None, None) => 0,
    };
    map.into_iter().map(|(ch, ts)| ClickStream::new(ch, ts, d)).collect()
}

/// Reads BPHT or CSV, chosen by the magic bytes.
pub fn read_timestamps(path: &Path, duration: Option<u64>) -> Result<Vec<ClickStream>> {
    let bytes = std::fs::read(path)?;
    let map = if bytes.starts_with(MAGIC) {
        decode_bpht(&bytes)?
    } else {
        let text = std::str::from_utf8(&bytes)
            .map_err(|e| Error::Format { offset: e.valid_up_to() as u64, reason: "not UTF-8 text".into() })?;
        decode_csv(text)?
    };
    into_streams(map, duration)
}

pub fn write_bpht(path: &Path, streams: &[ClickStream]) -> Result<()> {
    write_atomic(path, &encode_bpht(streams)?)
}
