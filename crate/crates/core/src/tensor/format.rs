//! Little-endian binary containers.
//!
//! Feature file (`VTOK`):
//!
//! | field       | type        |
//! |-------------|-------------|
//! | magic       | `b"VTOK"`   |
//! | version     | u16 = 1     |
//! | frames N    | u32         |
//! | H, W, C     | u16 each    |
//! | padding     | 2 zero bytes|
//! | timestamps  | N × f64     |
//! | values      | N·H·W·C × f32, frame-major then row-major |
//!
//! Compressed file (`VCMP`): magic, version u16, method u8, reserved u8,
//! frames u32, C u16, reserved u16, source tokens per frame u32, N × f64
//! timestamps, then per frame `M: u32`, the set's source count u32,
//! `M × u32` weights and `M·C × f32` token values. The per-frame source
//! count differs from the header value only for pooling with overlapping
//! bins, where it counts bin memberships.

use std::io::Write;
use std::path::Path;

use thiserror::Error;

use super::{check_timestamps, CompressedTokenSet, GridError, TokenGrid, VideoFeatures};
use crate::compress::Method;

pub const FEATURE_MAGIC: &[u8; 4] = b"VTOK";
pub const COMPRESSED_MAGIC: &[u8; 4] = b"VCMP";
pub const FORMAT_VERSION: u16 = 1;
/// Bytes before the timestamp block of a feature file.
pub const FEATURE_HEADER_LEN: usize = 18;
const COMPRESSED_HEADER_LEN: usize = 20;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic bytes {found:?}, expected {expected:?}")]
    BadMagic { found: Vec<u8>, expected: [u8; 4] },
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),
    #[error("payload truncated: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite value in frame {frame}")]
    NonFinite { frame: usize },
    #[error("timestamps are not strictly increasing non-negative seconds (index {index})")]
    BadTimestamps { index: usize },
    #[error("dimension {name}={value} exceeds the u16 header field")]
    TooLarge { name: &'static str, value: usize },
    #[error("unknown compression method code {0}")]
    UnknownMethod(u8),
    #[error(transparent)]
    Invalid(#[from] GridError),
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(FormatError::Truncated {
                needed: self.pos.saturating_add(n),
                available: self.buf.len(),
            }),
        }
    }

    fn u8(&mut self) -> Result<u8, FormatError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, FormatError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, FormatError> {
        let bytes = self.take(n.checked_mul(8).ok_or(FormatError::Truncated {
            needed: usize::MAX,
            available: self.buf.len(),
        })?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect())
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>, FormatError> {
        let bytes = self.take(n.checked_mul(4).ok_or(FormatError::Truncated {
            needed: usize::MAX,
            available: self.buf.len(),
        })?)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect())
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn expect_magic(&mut self, magic: &[u8; 4]) -> Result<(), FormatError> {
        let found = self.take(4).map_err(|_| FormatError::BadMagic {
            found: self.buf.to_vec(),
            expected: *magic,
        })?;
        if found != magic {
            return Err(FormatError::BadMagic {
                found: found.to_vec(),
                expected: *magic,
            });
        }
        Ok(())
    }
}

fn header_u16(name: &'static str, value: usize) -> Result<u16, FormatError> {
    u16::try_from(value).map_err(|_| FormatError::TooLarge { name, value })
}

/// Serializes `video` into the `VTOK` layout.
pub fn encode_features(video: &VideoFeatures) -> Result<Vec<u8>, FormatError> {
    let (h, w, c) = video.frame_shape();
    let n = video.len();
    let frames = u32::try_from(n).map_err(|_| FormatError::TooLarge {
        name: "frames",
        value: n,
    })?;
    let mut out = Vec::with_capacity(FEATURE_HEADER_LEN + 8 * n + 4 * n * h * w * c);
    out.extend_from_slice(FEATURE_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&frames.to_le_bytes());
    out.extend_from_slice(&header_u16("height", h)?.to_le_bytes());
    out.extend_from_slice(&header_u16("width", w)?.to_le_bytes());
    out.extend_from_slice(&header_u16("channels", c)?.to_le_bytes());
    out.extend_from_slice(&[0, 0]);
    for t in video.timestamps_s() {
        out.extend_from_slice(&t.to_le_bytes());
    }
    for frame in video.frames() {
        for v in frame.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

/// Parses a `VTOK` buffer, validating every structural invariant.
pub fn decode_features(bytes: &[u8]) -> Result<VideoFeatures, FormatError> {
    let mut cur = Cursor::new(bytes);
    cur.expect_magic(FEATURE_MAGIC)?;
    let version = cur.u16()?;
    if version != FORMAT_VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    let n = cur.u32()? as usize;
    let h = cur.u16()? as usize;
    let w = cur.u16()? as usize;
    let c = cur.u16()? as usize;
    cur.take(2)?;
    if n == 0 || h == 0 || w == 0 || c == 0 {
        return Err(FormatError::DimensionMismatch(format!(
            "header declares {n} frames of {h}x{w}x{c}"
        )));
    }
    let timestamps = cur.f64s(n)?;
    let per_frame = h * w * c;
    let values = n
        .checked_mul(per_frame)
        .ok_or_else(|| FormatError::DimensionMismatch("payload size overflows".into()))?;
    let data = cur.f32s(values)?;
    if cur.remaining() != 0 {
        return Err(FormatError::DimensionMismatch(format!(
            "{} trailing bytes after {n} frames of {h}x{w}x{c}",
            cur.remaining()
        )));
    }
    check_timestamps(&timestamps).map_err(|e| match e {
        GridError::InvalidTimestamp { index } | GridError::NonIncreasingTimestamps { index } => {
            FormatError::BadTimestamps { index }
        }
        other => FormatError::Invalid(other),
    })?;
    let frames = data
        .chunks_exact(per_frame)
        .enumerate()
        .map(|(frame, chunk)| {
            TokenGrid::new(h, w, c, chunk.to_vec()).map_err(|e| match e {
                GridError::NonFinite { .. } => FormatError::NonFinite { frame },
                other => FormatError::Invalid(other),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(VideoFeatures::new(frames, timestamps)?)
}

pub fn read_feature_file(path: impl AsRef<Path>) -> Result<VideoFeatures, FormatError> {
    decode_features(&std::fs::read(path)?)
}

/// Writes `video` to `path` atomically: the bytes go to a sibling temporary
/// file that is renamed into place once complete.
pub fn write_feature_file(
    video: &VideoFeatures,
    path: impl AsRef<Path>,
) -> Result<(), FormatError> {
    write_atomic(path.as_ref(), &encode_features(video)?)
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), FormatError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| FormatError::Io(e.error))?;
    Ok(())
}

/// Per-frame compressor output for a whole video.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedVideo {
    pub method: Method,
    /// Tokens per input frame before compression.
    pub source_tokens: usize,
    pub timestamps_s: Vec<f64>,
    pub frames: Vec<CompressedTokenSet>,
}

impl CompressedVideo {
    pub fn total_tokens(&self) -> usize {
        self.frames.iter().map(CompressedTokenSet::len).sum()
    }
}

pub fn encode_compressed(video: &CompressedVideo) -> Result<Vec<u8>, FormatError> {
    let first = video
        .frames
        .first()
        .ok_or(FormatError::Invalid(GridError::EmptyVideo))?;
    let c = first.channels();
    if video.frames.len() != video.timestamps_s.len() {
        return Err(FormatError::Invalid(GridError::TimestampCount {
            frames: video.frames.len(),
            timestamps: video.timestamps_s.len(),
        }));
    }
    let mut out = Vec::new();
    out.extend_from_slice(COMPRESSED_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(video.method.code());
    out.push(0);
    out.extend_from_slice(&(video.frames.len() as u32).to_le_bytes());
    out.extend_from_slice(&header_u16("channels", c)?.to_le_bytes());
    out.extend_from_slice(&[0, 0]);
    out.extend_from_slice(&(video.source_tokens as u32).to_le_bytes());
    for t in &video.timestamps_s {
        out.extend_from_slice(&t.to_le_bytes());
    }
    for (frame, set) in video.frames.iter().enumerate() {
        if set.channels() != c {
            return Err(FormatError::DimensionMismatch(format!(
                "frame {frame} has {} channels, expected {c}",
                set.channels()
            )));
        }
        out.extend_from_slice(&(set.len() as u32).to_le_bytes());
        out.extend_from_slice(&(set.source_count() as u32).to_le_bytes());
        for w in set.weights() {
            out.extend_from_slice(&w.to_le_bytes());
        }
        for v in set.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    debug_assert!(out.len() >= COMPRESSED_HEADER_LEN);
    Ok(out)
}

pub fn decode_compressed(bytes: &[u8]) -> Result<CompressedVideo, FormatError> {
    let mut cur = Cursor::new(bytes);
    cur.expect_magic(COMPRESSED_MAGIC)?;
    let version = cur.u16()?;
    if version != FORMAT_VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    let code = cur.u8()?;
    let method = Method::from_code(code).ok_or(FormatError::UnknownMethod(code))?;
    cur.u8()?;
    let n = cur.u32()? as usize;
    let c = cur.u16()? as usize;
    cur.take(2)?;
    let source_tokens = cur.u32()? as usize;
    if n == 0 || c == 0 || source_tokens == 0 {
        return Err(FormatError::DimensionMismatch(format!(
            "header declares {n} frames, {c} channels, {source_tokens} source tokens"
        )));
    }
    let timestamps_s = cur.f64s(n)?;
    check_timestamps(&timestamps_s).map_err(|e| match e {
        GridError::InvalidTimestamp { index } | GridError::NonIncreasingTimestamps { index } => {
            FormatError::BadTimestamps { index }
        }
        other => FormatError::Invalid(other),
    })?;
    let mut frames = Vec::with_capacity(n);
    for frame in 0..n {
        let m = cur.u32()? as usize;
        let source_count = cur.u32()? as usize;
        let weights: Vec<u32> = cur
            .take(m.saturating_mul(4))?
            .chunks_exact(4)
            .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        let data = cur.f32s(m.saturating_mul(c))?;
        if data.iter().any(|v| !v.is_finite()) {
            return Err(FormatError::NonFinite { frame });
        }
        frames.push(CompressedTokenSet::new(c, data, weights, source_count)?);
    }
    if cur.remaining() != 0 {
        return Err(FormatError::DimensionMismatch(format!(
            "{} trailing bytes",
            cur.remaining()
        )));
    }
    Ok(CompressedVideo {
        method,
        source_tokens,
        timestamps_s,
        frames,
    })
}

pub fn write_compressed_file(
    video: &CompressedVideo,
    path: impl AsRef<Path>,
) -> Result<(), FormatError> {
    write_atomic(path.as_ref(), &encode_compressed(video)?)
}

pub fn read_compressed_file(path: impl AsRef<Path>) -> Result<CompressedVideo, FormatError> {
    decode_compressed(&std::fs::read(path)?)
}
