//! Token-grid data types, the binary feature-file format and synthetic
//! fixture generation.

mod format;
mod synth;

pub(crate) use format::write_atomic;
pub use format::{
    decode_compressed, decode_features, encode_compressed, encode_features, read_compressed_file,
    read_feature_file, write_compressed_file, write_feature_file, CompressedVideo, FormatError,
    COMPRESSED_MAGIC, FEATURE_HEADER_LEN, FEATURE_MAGIC, FORMAT_VERSION,
};
pub use synth::{synth_grid, synth_video};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid dimensions must be positive, got {height}x{width}x{channels}")]
    ZeroDimension {
        height: usize,
        width: usize,
        channels: usize,
    },
    #[error("expected {expected} values, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },
    #[error("a video needs at least one frame")]
    EmptyVideo,
    #[error("frame {frame} has shape {found:?}, expected {expected:?}")]
    ShapeMismatch {
        frame: usize,
        expected: (usize, usize, usize),
        found: (usize, usize, usize),
    },
    #[error("{frames} frames but {timestamps} timestamps")]
    TimestampCount { frames: usize, timestamps: usize },
    #[error("timestamp {index} is negative or not finite")]
    InvalidTimestamp { index: usize },
    #[error("timestamp {index} does not increase strictly")]
    NonIncreasingTimestamps { index: usize },
    #[error("compressed set must hold between 1 and {source_count} tokens, got {tokens}")]
    TokenCount { tokens: usize, source_count: usize },
    #[error("merge weights sum to {sum}, expected {source_count}")]
    WeightSum { sum: u64, source_count: usize },
    #[error("merge weight at {index} is zero")]
    ZeroWeight { index: usize },
}

/// One frame of visual tokens: `height × width` positions with `channels`
/// features each, stored row-major as (row, column, channel).
#[derive(Debug, Clone, PartialEq)]
pub struct TokenGrid {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl TokenGrid {
    pub fn new(
        height: usize,
        width: usize,
        channels: usize,
        data: Vec<f32>,
    ) -> Result<Self, GridError> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(GridError::ZeroDimension {
                height,
                width,
                channels,
            });
        }
        let expected = height * width * channels;
        if data.len() != expected {
            return Err(GridError::LengthMismatch {
                expected,
                actual: data.len(),
            });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(GridError::NonFinite { index });
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    /// Builds a grid from a list of row-major tokens.
    pub fn from_tokens(
        height: usize,
        width: usize,
        tokens: &[Vec<f32>],
    ) -> Result<Self, GridError> {
        let channels = tokens.first().map_or(0, Vec::len);
        let data: Vec<f32> = tokens.iter().flatten().copied().collect();
        if tokens.len() != height * width || tokens.iter().any(|t| t.len() != channels) {
            return Err(GridError::LengthMismatch {
                expected: height * width * channels.max(1),
                actual: data.len(),
            });
        }
        Self::new(height, width, channels, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    /// Number of tokens, `height * width`.
    pub fn num_tokens(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Token at flat row-major index `idx`.
    pub fn token(&self, idx: usize) -> &[f32] {
        let c = self.channels;
        &self.data[idx * c..(idx + 1) * c]
    }

    pub fn at(&self, row: usize, col: usize) -> &[f32] {
        self.token(row * self.width + col)
    }

    pub fn tokens(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.channels)
    }
}

/// Encoded frames of one video with their sample times.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoFeatures {
    frames: Vec<TokenGrid>,
    timestamps_s: Vec<f64>,
}

impl VideoFeatures {
    pub fn new(frames: Vec<TokenGrid>, timestamps_s: Vec<f64>) -> Result<Self, GridError> {
        let first = frames.first().ok_or(GridError::EmptyVideo)?;
        let expected = first.shape();
        for (frame, grid) in frames.iter().enumerate() {
            if grid.shape() != expected {
                return Err(GridError::ShapeMismatch {
                    frame,
                    expected,
                    found: grid.shape(),
                });
            }
        }
        if timestamps_s.len() != frames.len() {
            return Err(GridError::TimestampCount {
                frames: frames.len(),
                timestamps: timestamps_s.len(),
            });
        }
        check_timestamps(&timestamps_s)?;
        Ok(Self {
            frames,
            timestamps_s,
        })
    }

    pub fn frames(&self) -> &[TokenGrid] {
        &self.frames
    }

    pub fn timestamps_s(&self) -> &[f64] {
        &self.timestamps_s
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    /// Always false; a video holds at least one frame.
    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Shared `(height, width, channels)` of every frame.
    pub fn frame_shape(&self) -> (usize, usize, usize) {
        self.frames[0].shape()
    }

    pub fn into_parts(self) -> (Vec<TokenGrid>, Vec<f64>) {
        (self.frames, self.timestamps_s)
    }
}

pub(crate) fn check_timestamps(ts: &[f64]) -> Result<(), GridError> {
    for (index, &t) in ts.iter().enumerate() {
        if !t.is_finite() || t < 0.0 {
            return Err(GridError::InvalidTimestamp { index });
        }
        if index > 0 && t <= ts[index - 1] {
            return Err(GridError::NonIncreasingTimestamps { index });
        }
    }
    Ok(())
}

/// Output of a compressor: `M` tokens of `channels` features, each carrying
/// the number of source tokens it represents.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedTokenSet {
    channels: usize,
    data: Vec<f32>,
    weights: Vec<u32>,
    source_count: usize,
}

impl CompressedTokenSet {
    pub fn new(
        channels: usize,
        data: Vec<f32>,
        weights: Vec<u32>,
        source_count: usize,
    ) -> Result<Self, GridError> {
        let m = weights.len();
        if m == 0 || m > source_count {
            return Err(GridError::TokenCount {
                tokens: m,
                source_count,
            });
        }
        if channels == 0 || data.len() != m * channels {
            return Err(GridError::LengthMismatch {
                expected: m * channels,
                actual: data.len(),
            });
        }
        if let Some(index) = weights.iter().position(|&w| w == 0) {
            return Err(GridError::ZeroWeight { index });
        }
        let sum: u64 = weights.iter().map(|&w| u64::from(w)).sum();
        if sum != source_count as u64 {
            return Err(GridError::WeightSum { sum, source_count });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(GridError::NonFinite { index });
        }
        Ok(Self {
            channels,
            data,
            weights,
            source_count,
        })
    }

    /// Number of output tokens `M`.
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn source_count(&self) -> usize {
        self.source_count
    }

    pub fn weights(&self) -> &[u32] {
        &self.weights
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn token(&self, idx: usize) -> &[f32] {
        &self.data[idx * self.channels..(idx + 1) * self.channels]
    }

    pub fn tokens(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.channels)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(h: usize, w: usize, c: usize) -> TokenGrid {
        TokenGrid::new(h, w, c, vec![0.5; h * w * c]).unwrap()
    }

    #[test]
    fn grid_rejects_each_violation() {
        assert!(matches!(
            TokenGrid::new(0, 2, 1, vec![]),
            Err(GridError::ZeroDimension { .. })
        ));
        assert!(matches!(
            TokenGrid::new(2, 2, 1, vec![0.0; 3]),
            Err(GridError::LengthMismatch {
                expected: 4,
                actual: 3
            })
        ));
        assert_eq!(
            TokenGrid::new(1, 2, 1, vec![0.0, f32::NAN]),
            Err(GridError::NonFinite { index: 1 })
        );
        assert_eq!(
            TokenGrid::new(1, 1, 1, vec![f32::INFINITY]),
            Err(GridError::NonFinite { index: 0 })
        );
    }

    #[test]
    fn grid_indexing_is_row_major() {
        let g = TokenGrid::new(2, 3, 2, (0..12).map(|v| v as f32).collect()).unwrap();
        assert_eq!(g.at(1, 2), &[10.0, 11.0]);
        assert_eq!(g.token(1), &[2.0, 3.0]);
        assert_eq!(g.tokens().count(), 6);
    }

    #[test]
    fn video_rejects_each_violation() {
        assert_eq!(
            VideoFeatures::new(vec![], vec![]),
            Err(GridError::EmptyVideo)
        );
        assert!(matches!(
            VideoFeatures::new(vec![grid(2, 2, 1), grid(3, 2, 1)], vec![0.0, 1.0]),
            Err(GridError::ShapeMismatch { frame: 1, .. })
        ));
        assert!(matches!(
            VideoFeatures::new(vec![grid(2, 2, 1)], vec![0.0, 1.0]),
            Err(GridError::TimestampCount { .. })
        ));
        assert_eq!(
            VideoFeatures::new(vec![grid(2, 2, 1), grid(2, 2, 1)], vec![1.0, 1.0]),
            Err(GridError::NonIncreasingTimestamps { index: 1 })
        );
        assert_eq!(
            VideoFeatures::new(vec![grid(2, 2, 1)], vec![-0.5]),
            Err(GridError::InvalidTimestamp { index: 0 })
        );
        assert!(VideoFeatures::new(vec![grid(2, 2, 1), grid(2, 2, 1)], vec![0.0, 0.5]).is_ok());
    }

    #[test]
    fn compressed_set_rejects_each_violation() {
        assert!(matches!(
            CompressedTokenSet::new(1, vec![], vec![], 4),
            Err(GridError::TokenCount { tokens: 0, .. })
        ));
        assert!(matches!(
            CompressedTokenSet::new(1, vec![0.0; 5], vec![1; 5], 4),
            Err(GridError::TokenCount { tokens: 5, .. })
        ));
        assert!(matches!(
            CompressedTokenSet::new(1, vec![0.0; 2], vec![1, 2], 4),
            Err(GridError::WeightSum { sum: 3, .. })
        ));
        assert!(matches!(
            CompressedTokenSet::new(1, vec![0.0; 2], vec![0, 4], 4),
            Err(GridError::ZeroWeight { index: 0 })
        ));
        assert!(matches!(
            CompressedTokenSet::new(2, vec![0.0; 3], vec![2, 2], 4),
            Err(GridError::LengthMismatch { .. })
        ));
        let ok = CompressedTokenSet::new(2, vec![1.0, 2.0, 3.0, 4.0], vec![3, 1], 4).unwrap();
        assert_eq!(ok.token(1), &[3.0, 4.0]);
    }
}
