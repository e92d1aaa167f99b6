use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::SeriesChannel;
use crate::error::{Error, Result};

/// Parses the REDD low-frequency layout: one `unix_timestamp watts` pair per
/// line, whitespace separated. Blank lines are ignored.
pub fn parse_channel(name: &str, text: &str) -> Result<SeriesChannel> {
    let mut timestamps = Vec::new();
    let mut watts = Vec::new();
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: name.to_string(),
        line,
        msg,
    };
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        let mut fields = raw.split_whitespace();
        let (Some(ts), Some(w), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(parse_err(line, format!("expected `timestamp watts`, got {raw:?}")));
        };
        let ts: i64 = ts
            .parse()
            .map_err(|_| parse_err(line, format!("bad timestamp {ts:?}")))?;
        let w: f64 = w.parse().map_err(|_| parse_err(line, format!("bad watts {w:?}")))?;
        if !w.is_finite() || w < 0.0 {
            return Err(parse_err(
                line,
                format!("watts must be finite and nonnegative, got {w}"),
            ));
        }
        if let Some(&prev) = timestamps.last() {
            if ts <= prev {
                return Err(Error::NonMonotonic {
                    path: name.to_string(),
                    line,
                    prev,
                    next: ts,
                });
            }
        }
        timestamps.push(ts);
        watts.push(w);
    }
    if timestamps.is_empty() {
        return Err(Error::EmptySeries(name.to_string()));
    }
    SeriesChannel::new(name, timestamps, watts)
}

pub fn load_channel(path: impl AsRef<Path>) -> Result<SeriesChannel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_channel(&name, &text).map_err(|e| with_path(e, path))
}

pub fn write_channel(path: impl AsRef<Path>, channel: &SeriesChannel) -> Result<()> {
    let mut out = String::with_capacity(channel.len() * 20);
    for (t, w) in channel.timestamps().iter().zip(channel.watts()) {
        let _ = writeln!(out, "{t} {w}");
    }
    fs::write(path.as_ref(), out).map_err(|e| Error::io(path.as_ref(), e))
}

/// Parses a `timestamp,watts` CSV with that exact header.
pub fn parse_series_csv(name: &str, text: &str) -> Result<SeriesChannel> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: name.to_string(),
        line,
        msg,
    };
    let header = reader.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>() != ["timestamp", "watts"] {
        return Err(parse_err(
            1,
            format!("expected header `timestamp,watts`, got {header:?}"),
        ));
    }
    let mut timestamps = Vec::new();
    let mut watts = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != 2 {
            return Err(parse_err(line, format!("expected 2 fields, got {}", record.len())));
        }
        let ts: i64 = record[0]
            .parse()
            .map_err(|_| parse_err(line, format!("bad timestamp {:?}", &record[0])))?;
        let w: f64 = record[1]
            .parse()
            .map_err(|_| parse_err(line, format!("bad watts {:?}", &record[1])))?;
        if !w.is_finite() || w < 0.0 {
            return Err(parse_err(
                line,
                format!("watts must be finite and nonnegative, got {w}"),
            ));
        }
        if let Some(&prev) = timestamps.last() {
            if ts <= prev {
                return Err(Error::NonMonotonic {
                    path: name.to_string(),
                    line,
                    prev,
                    next: ts,
                });
            }
        }
        timestamps.push(ts);
        watts.push(w);
    }
    SeriesChannel::new(name, timestamps, watts)
}

pub fn load_series_csv(path: impl AsRef<Path>) -> Result<SeriesChannel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_series_csv(&name, &text).map_err(|e| with_path(e, path))
}

pub fn series_csv_string(channel: &SeriesChannel) -> String {
    let mut out = String::with_capacity(channel.len() * 24 + 16);
    out.push_str("timestamp,watts\n");
    for (t, w) in channel.timestamps().iter().zip(channel.watts()) {
        let _ = writeln!(out, "{t},{w}");
    }
    out
}

pub fn write_series_csv(path: impl AsRef<Path>, channel: &SeriesChannel) -> Result<()> {
    fs::write(path.as_ref(), series_csv_string(channel)).map_err(|e| Error::io(path.as_ref(), e))
}

/// Replaces the bare channel name in parse errors with the full file path.
fn with_path(err: Error, path: &Path) -> Error {
    let p = path.display().to_string();
    match err {
        Error::Parse { line, msg, .. } => Error::Parse { path: p, line, msg },
        Error::NonMonotonic { line, prev, next, .. } => Error::NonMonotonic {
            path: p,
            line,
            prev,
            next,
        },
        Error::EmptySeries(_) => Error::EmptySeries(p),
        other => other,
    }
}
