//! BSOR (open replay) binary layout, version 1.
//!
//! Little-endian throughout. The file starts with the magic word
//! `0x442D3D69` and a one-byte file version, followed by sections that each
//! open with a one-byte tag:
//!
//! | tag | section      | body                                                      |
//! |-----|--------------|-----------------------------------------------------------|
//! | 0   | info         | fixed sequence of strings / ints / floats / a bool         |
//! | 1   | frames       | `i32` count, then per frame `f32` time, `i32` fps, 3 × 7 `f32` |
//! | 2   | notes        | `i32` count, variable-size note events                    |
//! | 3   | walls        | `i32` count × 16 bytes                                    |
//! | 4   | heights      | `i32` count × 8 bytes                                     |
//! | 5   | pauses       | `i32` count × 12 bytes                                    |
//! | 6   | offsets      | 2 × 7 `f32` controller offsets                            |
//! | 7   | user data    | `i32` count, then (string key, `i32` length, bytes)       |
//!
//! Strings are `i32`-length-prefixed UTF-8. Only the frames section feeds the
//! model; every other section is length-checked and skipped, except info and
//! user data which populate [`Recording::metadata`]. An unknown tag ends
//! parsing with a warning, since its length cannot be known.
//!
//! Identity fields (`recording_id`, `user_id`) and metadata keys that have no
//! info-section slot are stored in the user-data section, so recordings
//! written here parse back unchanged. Info fields appear in metadata under an
//! `info.` prefix. For files without our identity entries the file version
//! is recorded as `bsor.version`.

use std::collections::BTreeMap;

use super::{
    check_finite, warn_on_raw_irregularities, Frame, Pose, Recording, TelemetryError,
    FRAME_WIDTH,
};

pub const BSOR_MAGIC: u32 = 0x442D_3D69;
pub const BSOR_VERSION: u8 = 1;

const TAG_INFO: u8 = 0;
const TAG_FRAMES: u8 = 1;
const TAG_NOTES: u8 = 2;
const TAG_WALLS: u8 = 3;
const TAG_HEIGHTS: u8 = 4;
const TAG_PAUSES: u8 = 5;
const TAG_OFFSETS: u8 = 6;
const TAG_USER_DATA: u8 = 7;

const FRAME_BYTES: u64 = 4 + 4 + 4 * FRAME_WIDTH as u64;
const NOTE_HEADER_BYTES: u64 = 16;
const NOTE_CUT_BYTES: u64 = 72;
const WALL_BYTES: u64 = 16;
const HEIGHT_BYTES: u64 = 8;
const PAUSE_BYTES: u64 = 12;
const OFFSETS_BYTES: u64 = 56;

const KEY_RECORDING_ID: &str = "recording_id";
const KEY_USER_ID: &str = "user_id";
const VERSION_KEY: &str = "bsor.version";

#[derive(Clone, Copy)]
enum InfoKind {
    Str,
    Int,
    Float,
    Bool,
}

const INFO_FIELDS: [(&str, InfoKind); 23] = [
    ("info.version", InfoKind::Str),
    ("info.game_version", InfoKind::Str),
    ("info.timestamp", InfoKind::Str),
    ("info.player_id", InfoKind::Str),
    ("info.player_name", InfoKind::Str),
    ("info.platform", InfoKind::Str),
    ("info.tracking_system", InfoKind::Str),
    ("info.hmd", InfoKind::Str),
    ("info.controller", InfoKind::Str),
    ("info.hash", InfoKind::Str),
    ("info.song_name", InfoKind::Str),
    ("info.mapper", InfoKind::Str),
    ("info.difficulty", InfoKind::Str),
    ("info.score", InfoKind::Int),
    ("info.mode", InfoKind::Str),
    ("info.environment", InfoKind::Str),
    ("info.modifiers", InfoKind::Str),
    ("info.jump_distance", InfoKind::Float),
    ("info.left_handed", InfoKind::Bool),
    ("info.height", InfoKind::Float),
    ("info.start_time", InfoKind::Float),
    ("info.fail_time", InfoKind::Float),
    ("info.speed", InfoKind::Float),
];

fn is_info_key(key: &str) -> bool {
    INFO_FIELDS.iter().any(|(k, _)| *k == key)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    section: &'static str,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> u64 {
        (self.buf.len() - self.pos) as u64
    }

    fn need(&self, n: u64) -> Result<(), TelemetryError> {
        if n > self.remaining() {
            return Err(TelemetryError::TruncatedSection {
                section: self.section,
                needed: n,
                remaining: self.remaining(),
            });
        }
        Ok(())
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], TelemetryError> {
        self.need(n as u64)?;
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, TelemetryError> {
        Ok(self.take(1)?[0])
    }

    fn i32(&mut self) -> Result<i32, TelemetryError> {
        let b = self.take(4)?;
        Ok(i32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u32(&mut self) -> Result<u32, TelemetryError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f32(&mut self) -> Result<f32, TelemetryError> {
        let b = self.take(4)?;
        Ok(f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    /// Reads an element count and checks that `count * min_size` bytes remain
    /// before anything is allocated for it.
    fn count(&mut self, min_size: u64) -> Result<usize, TelemetryError> {
        let count = self.i32()?;
        if count < 0 {
            return Err(TelemetryError::NegativeCount {
                section: self.section,
                count: count as i64,
            });
        }
        self.need(count as u64 * min_size)?;
        Ok(count as usize)
    }

    fn bytes(&mut self) -> Result<&'a [u8], TelemetryError> {
        let len = self.count(1)?;
        self.take(len)
    }

    fn string(&mut self) -> Result<String, TelemetryError> {
        Ok(String::from_utf8_lossy(self.bytes()?).into_owned())
    }

    fn pose(&mut self) -> Result<Pose, TelemetryError> {
        let mut c = [0f32; 7];
        for v in &mut c {
            *v = self.f32()?;
        }
        Ok(Pose::from_coords(&c))
    }
}

/// Parses a complete BSOR buffer into a [`Recording`].
pub fn parse_bsor(bytes: &[u8]) -> Result<Recording, TelemetryError> {
    let mut r = Reader {
        buf: bytes,
        pos: 0,
        section: "header",
    };
    let magic = r.u32()?;
    if magic != BSOR_MAGIC {
        return Err(TelemetryError::BadMagic { found: magic });
    }
    let version = r.u8()?;
    if version != BSOR_VERSION {
        return Err(TelemetryError::UnsupportedVersion(version));
    }

    let mut frames = Vec::new();
    let mut info: BTreeMap<String, String> = BTreeMap::new();
    let mut user_data: BTreeMap<String, String> = BTreeMap::new();

    while r.remaining() > 0 {
        r.section = "header";
        let tag = r.u8()?;
        match tag {
            TAG_INFO => {
                r.section = "info";
                for (key, kind) in INFO_FIELDS {
                    let value = match kind {
                        InfoKind::Str => r.string()?,
                        InfoKind::Int => r.i32()?.to_string(),
                        InfoKind::Float => r.f32()?.to_string(),
                        InfoKind::Bool => (r.u8()? != 0).to_string(),
                    };
                    info.insert(key.to_string(), value);
                }
            }
            TAG_FRAMES => {
                r.section = "frames";
                let count = r.count(FRAME_BYTES)?;
                frames.reserve(count);
                for _ in 0..count {
                    let time = r.f32()?;
                    let fps = r.i32()?;
                    let head = r.pose()?;
                    let left_hand = r.pose()?;
                    let right_hand = r.pose()?;
                    frames.push(Frame {
                        time,
                        fps,
                        head,
                        left_hand,
                        right_hand,
                    });
                }
            }
            TAG_NOTES => {
                r.section = "notes";
                let count = r.count(NOTE_HEADER_BYTES)?;
                for _ in 0..count {
                    r.take(12)?;
                    let event_type = r.i32()?;
                    // good cuts (0) and bad cuts (2) carry cut details
                    if event_type == 0 || event_type == 2 {
                        r.take(NOTE_CUT_BYTES as usize)?;
                    }
                }
            }
            TAG_WALLS => skip_fixed(&mut r, "walls", WALL_BYTES)?,
            TAG_HEIGHTS => skip_fixed(&mut r, "heights", HEIGHT_BYTES)?,
            TAG_PAUSES => skip_fixed(&mut r, "pauses", PAUSE_BYTES)?,
            TAG_OFFSETS => {
                r.section = "offsets";
                r.take(OFFSETS_BYTES as usize)?;
            }
            TAG_USER_DATA => {
                r.section = "user data";
                let count = r.count(8)?;
                for _ in 0..count {
                    let key = r.string()?;
                    let value = String::from_utf8_lossy(r.bytes()?).into_owned();
                    user_data.insert(key, value);
                }
            }
            other => {
                log::warn!(
                    "unknown BSOR section tag {other} at byte {}; ignoring {} trailing bytes",
                    r.pos - 1,
                    r.remaining()
                );
                break;
            }
        }
    }

    check_finite(&frames)?;

    let written_here = user_data.contains_key(KEY_RECORDING_ID);
    let recording_id = user_data.remove(KEY_RECORDING_ID).unwrap_or_default();
    let user_id = user_data
        .remove(KEY_USER_ID)
        .or_else(|| info.get("info.player_id").cloned())
        .unwrap_or_default();
    let mut metadata = info;
    metadata.extend(user_data);
    if !written_here {
        metadata.insert(VERSION_KEY.to_string(), version.to_string());
    }

    let rec = Recording {
        recording_id,
        user_id,
        frames,
        metadata,
    };
    warn_on_raw_irregularities(&rec);
    Ok(rec)
}

fn skip_fixed(r: &mut Reader<'_>, section: &'static str, size: u64) -> Result<(), TelemetryError> {
    r.section = section;
    let count = r.count(size)?;
    r.take(count * size as usize)?;
    Ok(())
}

struct Writer {
    out: Vec<u8>,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.out.push(v);
    }
    fn i32(&mut self, v: i32) {
        self.out.extend_from_slice(&v.to_le_bytes());
    }
    fn f32(&mut self, v: f32) {
        self.out.extend_from_slice(&v.to_le_bytes());
    }
    fn bytes(&mut self, b: &[u8]) {
        self.i32(b.len() as i32);
        self.out.extend_from_slice(b);
    }
    fn pose(&mut self, p: &Pose) {
        for v in p.coords() {
            self.f32(v);
        }
    }
}

/// Serializes a recording as a BSOR v1 file that [`parse_bsor`] reads back
/// unchanged.
///
/// The info section is written only when the metadata holds at least one
/// `info.*` key; missing info fields are then filled with empty/zero values.
pub fn write_bsor(rec: &Recording) -> Result<Vec<u8>, TelemetryError> {
    check_finite(&rec.frames)?;

    let mut w = Writer {
        out: Vec::with_capacity(64 + rec.frames.len() * FRAME_BYTES as usize),
    };
    w.out.extend_from_slice(&BSOR_MAGIC.to_le_bytes());
    let version = match rec.metadata.get(VERSION_KEY) {
        Some(v) => v.parse::<u8>().map_err(|_| TelemetryError::InvalidMetadata {
            key: VERSION_KEY.to_string(),
            value: v.clone(),
        })?,
        None => BSOR_VERSION,
    };
    if version != BSOR_VERSION {
        return Err(TelemetryError::UnsupportedVersion(version));
    }
    w.u8(version);

    if rec.metadata.keys().any(|k| is_info_key(k)) {
        w.u8(TAG_INFO);
        for (key, kind) in INFO_FIELDS {
            let raw = rec.metadata.get(key).map(String::as_str);
            let invalid = || TelemetryError::InvalidMetadata {
                key: key.to_string(),
                value: raw.unwrap_or_default().to_string(),
            };
            match kind {
                InfoKind::Str => w.bytes(raw.unwrap_or("").as_bytes()),
                InfoKind::Int => w.i32(raw.map_or(Ok(0), str::parse).map_err(|_| invalid())?),
                InfoKind::Float => w.f32(raw.map_or(Ok(0.0), str::parse).map_err(|_| invalid())?),
                InfoKind::Bool => match raw.unwrap_or("false") {
                    "true" => w.u8(1),
                    "false" => w.u8(0),
                    _ => return Err(invalid()),
                },
            }
        }
    }

    w.u8(TAG_FRAMES);
    w.i32(rec.frames.len() as i32);
    for f in &rec.frames {
        w.f32(f.time);
        w.i32(f.fps);
        w.pose(&f.head);
        w.pose(&f.left_hand);
        w.pose(&f.right_hand);
    }
    for tag in [TAG_NOTES, TAG_WALLS, TAG_HEIGHTS, TAG_PAUSES] {
        w.u8(tag);
        w.i32(0);
    }

    let extra: Vec<(&String, &String)> =
        rec.metadata.iter().filter(|(k, _)| !is_info_key(k)).collect();
    w.u8(TAG_USER_DATA);
    w.i32(2 + extra.len() as i32);
    w.bytes(KEY_RECORDING_ID.as_bytes());
    w.bytes(rec.recording_id.as_bytes());
    w.bytes(KEY_USER_ID.as_bytes());
    w.bytes(rec.user_id.as_bytes());
    for (k, v) in extra {
        w.bytes(k.as_bytes());
        w.bytes(v.as_bytes());
    }
    Ok(w.out)
}
