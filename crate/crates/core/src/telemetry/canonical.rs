//! Line-oriented canonical telemetry text.
//!
//! ```text
//! H <recording_id> <user_id> [key=value ...]
//! F <time> <fps> <head px py pz qx qy qz qw> <left ...> <right ...>
//! F ...
//! ```
//!
//! Tokens are whitespace-separated. Identifiers, keys and values are
//! percent-escaped (`%`, `=`, `~`, whitespace and control characters) and
//! the empty string is written as `~`. Floats use the shortest decimal form
//! that parses back to the identical `f32`. Blank lines and lines starting
//! with `#` are ignored.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{check_finite, warn_on_raw_irregularities, Frame, Recording, TelemetryError, FRAME_WIDTH};

const EMPTY: &str = "~";

fn escape(s: &str) -> String {
    if s.is_empty() {
        return EMPTY.to_string();
    }
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        if c == '%' || c == '=' || c == '~' || c.is_whitespace() || c.is_control() {
            let mut buf = [0u8; 4];
            for b in c.encode_utf8(&mut buf).bytes() {
                let _ = write!(out, "%{b:02X}");
            }
        } else {
            out.push(c);
        }
    }
    out
}

fn unescape(token: &str, line: usize) -> Result<String, TelemetryError> {
    if token == EMPTY {
        return Ok(String::new());
    }
    let malformed = |reason: &str| TelemetryError::MalformedRecord {
        line,
        reason: format!("{reason} in token {token:?}"),
    };
    let raw = token.as_bytes();
    let mut bytes = Vec::with_capacity(raw.len());
    let mut i = 0;
    while i < raw.len() {
        if raw[i] == b'%' {
            let hex = token.get(i + 1..i + 3).ok_or_else(|| malformed("short escape"))?;
            let b = u8::from_str_radix(hex, 16).map_err(|_| malformed("bad escape"))?;
            bytes.push(b);
            i += 3;
        } else {
            bytes.push(raw[i]);
            i += 1;
        }
    }
    String::from_utf8(bytes).map_err(|_| malformed("invalid UTF-8"))
}

/// Serializes a recording to canonical text.
pub fn write_canonical(rec: &Recording) -> Result<Vec<u8>, TelemetryError> {
    check_finite(&rec.frames)?;
    let mut out = String::with_capacity(32 + rec.frames.len() * 200);
    out.push_str("H ");
    out.push_str(&escape(&rec.recording_id));
    out.push(' ');
    out.push_str(&escape(&rec.user_id));
    for (k, v) in &rec.metadata {
        let _ = write!(out, " {}={}", escape(k), escape(v));
    }
    out.push('\n');
    for f in &rec.frames {
        let _ = write!(out, "F {} {}", f.time, f.fps);
        for v in f.coords() {
            let _ = write!(out, " {v}");
        }
        out.push('\n');
    }
    Ok(out.into_bytes())
}

/// Parses canonical text back into a [`Recording`].
pub fn read_canonical(bytes: &[u8]) -> Result<Recording, TelemetryError> {
    let text = std::str::from_utf8(bytes).map_err(|e| TelemetryError::MalformedRecord {
        line: 0,
        reason: format!("not UTF-8: {e}"),
    })?;
    let mut rec: Option<Recording> = None;
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut tokens = trimmed.split_whitespace();
        let tag = tokens.next().unwrap_or_default();
        match (tag, rec.as_mut()) {
            ("H", None) => rec = Some(parse_header(tokens, line_no)?),
            ("H", Some(_)) => {
                return Err(TelemetryError::MalformedRecord {
                    line: line_no,
                    reason: "second header record".into(),
                })
            }
            ("F", Some(r)) => {
                let frame = parse_frame(tokens, line_no)?;
                if let Some(field) = frame.first_non_finite() {
                    return Err(TelemetryError::NonFiniteValue {
                        frame: r.frames.len(),
                        field,
                    });
                }
                r.frames.push(frame);
            }
            ("F", None) => return Err(TelemetryError::MissingHeader),
            (other, _) => {
                return Err(TelemetryError::MalformedRecord {
                    line: line_no,
                    reason: format!("unknown record tag {other:?}"),
                })
            }
        }
    }
    let rec = rec.ok_or(TelemetryError::MissingHeader)?;
    warn_on_raw_irregularities(&rec);
    Ok(rec)
}

fn parse_header<'a>(
    mut tokens: impl Iterator<Item = &'a str>,
    line: usize,
) -> Result<Recording, TelemetryError> {
    let missing = |what: &str| TelemetryError::MalformedRecord {
        line,
        reason: format!("header lacks {what}"),
    };
    let recording_id = unescape(tokens.next().ok_or_else(|| missing("recording_id"))?, line)?;
    let user_id = unescape(tokens.next().ok_or_else(|| missing("user_id"))?, line)?;
    let mut metadata = BTreeMap::new();
    for tok in tokens {
        let (k, v) = tok.split_once('=').ok_or_else(|| TelemetryError::MalformedRecord {
            line,
            reason: format!("metadata token {tok:?} is not key=value"),
        })?;
        metadata.insert(unescape(k, line)?, unescape(v, line)?);
    }
    Ok(Recording {
        recording_id,
        user_id,
        frames: Vec::new(),
        metadata,
    })
}

fn parse_frame<'a>(
    tokens: impl Iterator<Item = &'a str>,
    line: usize,
) -> Result<Frame, TelemetryError> {
    let tokens: Vec<&str> = tokens.collect();
    if tokens.len() != 2 + FRAME_WIDTH {
        return Err(TelemetryError::MalformedRecord {
            line,
            reason: format!(
                "frame record needs time, fps and {FRAME_WIDTH} coordinates, found {} values",
                tokens.len()
            ),
        });
    }
    let bad = |tok: &str| TelemetryError::MalformedRecord {
        line,
        reason: format!("cannot parse {tok:?}"),
    };
    let time: f32 = tokens[0].parse().map_err(|_| bad(tokens[0]))?;
    let fps: i32 = tokens[1].parse().map_err(|_| bad(tokens[1]))?;
    let mut coords = [0f32; FRAME_WIDTH];
    for (slot, tok) in coords.iter_mut().zip(&tokens[2..]) {
        *slot = tok.parse().map_err(|_| bad(tok))?;
    }
    Ok(Frame::from_coords(time, fps, &coords))
}
