//! Dynamic token compressors.
//!
//! Each compressor maps one frame's `H × W` token grid to `M` output tokens:
//!
//! * [`adaptive_avg_pool`]: average over adaptive spatial bins, `M = s²`.
//! * [`bipartite_soft_match_merge`]: iterated bipartite soft matching on
//!   cosine similarity, any `M` with `N / M ≤ 49`.
//! * [`prune_top_k`]: keep the `M` best tokens under a small MLP scorer,
//!   optionally with Gumbel perturbation.

mod merge;
mod pool;
mod prune;
mod similarity;

pub use merge::{
    bipartite_soft_match_merge, merge_to_count, merge_with_trace, MergeRatio, MergeRound,
};
pub use pool::{adaptive_avg_pool, adaptive_avg_pool2d, bin_bounds, PoolShape};
pub use prune::{
    decode_scorer, encode_scorer, gelu, prune_top_k, read_scorer_file, select_tokens,
    write_scorer_file, GumbelConfig, GumbelMode, ScorerParams, SCORER_MAGIC,
};
pub use similarity::cosine_similarity;

pub use crate::tensor::CompressedTokenSet;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::tensor::{GridError, TokenGrid};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CompressError {
    #[error("pool shape {out_h}x{out_w} is invalid for a {in_h}x{in_w} grid")]
    InvalidPoolShape {
        out_h: usize,
        out_w: usize,
        in_h: usize,
        in_w: usize,
    },
    #[error("pool shape {out_h}x{out_w} must be square with side in [4, 28]")]
    PoolShapeRange { out_h: usize, out_w: usize },
    #[error("merge ratio {0} is outside [1, 49]")]
    InvalidRatio(f64),
    #[error("target token count {target} is invalid for {available} source tokens")]
    InvalidTarget { target: usize, available: usize },
    #[error("cannot merge a single token with k > 1")]
    TooFewTokens,
    #[error("{target} tokens cannot be realized by pooling (needs a square count)")]
    UnrealizableTarget { target: usize },
    #[error("unknown compression method {0:?}")]
    UnknownMethod(String),
    #[error("scorer expects {expected} channels, grid has {found}")]
    ScorerShape { expected: usize, found: usize },
    #[error("temperature must be positive and finite, got {0}")]
    InvalidTemperature(f64),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Compressor family, without its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Pool,
    Merge,
    Prune,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Pool, Method::Merge, Method::Prune];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Pool => "pool",
            Method::Merge => "merge",
            Method::Prune => "prune",
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Method::Pool => 0,
            Method::Merge => 1,
            Method::Prune => 2,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.code() == code)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = CompressError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| CompressError::UnknownMethod(s.to_string()))
    }
}

/// A compressor together with the parameters it needs beyond the target count.
#[derive(Debug, Clone, PartialEq)]
pub enum Compressor {
    Pool,
    Merge,
    Prune {
        params: ScorerParams,
        cfg: GumbelConfig,
    },
}

impl Compressor {
    pub fn method(&self) -> Method {
        match self {
            Compressor::Pool => Method::Pool,
            Compressor::Merge => Method::Merge,
            Compressor::Prune { .. } => Method::Prune,
        }
    }
}

/// Reduces `grid` to `target_tokens` tokens with the given compressor.
///
/// Pooling needs a square target whose side fits the grid and lies in
/// `[4, 28]`; use [`crate::budget::snap_to_grid`] to get one. Merging needs
/// `N / target` within `[1, 49]`.
pub fn compress(
    grid: &TokenGrid,
    compressor: &Compressor,
    target_tokens: usize,
) -> Result<CompressedTokenSet, CompressError> {
    let n = grid.num_tokens();
    if target_tokens == 0 || target_tokens > n {
        return Err(CompressError::InvalidTarget {
            target: target_tokens,
            available: n,
        });
    }
    match compressor {
        Compressor::Pool => {
            let side = exact_sqrt(target_tokens).ok_or(CompressError::UnrealizableTarget {
                target: target_tokens,
            })?;
            let shape = PoolShape::new(side, side)
                .ok()
                .filter(|s| s.fits(grid))
                .ok_or(CompressError::UnrealizableTarget {
                    target: target_tokens,
                })?;
            adaptive_avg_pool(grid, shape)
        }
        Compressor::Merge => {
            MergeRatio::new(n as f64 / target_tokens as f64)?;
            merge_to_count(grid, target_tokens)
        }
        Compressor::Prune { params, cfg } => prune_top_k(grid, target_tokens, params, cfg),
    }
}

fn exact_sqrt(n: usize) -> Option<usize> {
    let s = (n as f64).sqrt().round() as usize;
    (s * s == n).then_some(s)
}
