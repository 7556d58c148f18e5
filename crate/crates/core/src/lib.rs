//! Dynamic visual-token compression for video language models.
//!
//! A video arrives as a sequence of per-frame token grids produced by a
//! vision encoder. This crate reduces each grid to an arbitrary token count
//! with one of three compressors (adaptive pooling, bipartite token merging,
//! scored pruning), allocates a fixed visual-context budget between frame
//! count and tokens per frame, serializes the result into a timestamped
//! prompt layout, and builds synthetic video QA records from caption corpora.
//!
//! ```
//! use vtok_core::budget::{inference_tokens_per_frame, snap_to_grid};
//! use vtok_core::compress::{compress, Compressor};
//! use vtok_core::tensor::synth_grid;
//!
//! let grid = synth_grid(7, 24, 24, 8).unwrap();
//! let tpf = inference_tokens_per_frame(12_000, 120);
//! let shape = snap_to_grid(tpf).unwrap();
//! let out = compress(&grid, &Compressor::Pool, shape.token_count()).unwrap();
//! assert_eq!(out.len(), 100);
//! ```

pub mod budget;
pub mod compress;
pub mod pipeline;
pub mod rng;
pub mod serialize;
pub mod tensor;

pub use budget::{BudgetPlan, FrameSamplePlan};
pub use compress::{CompressedTokenSet, Compressor, Method, PoolShape};
pub use serialize::PromptLayout;
pub use tensor::{TokenGrid, VideoFeatures};

/// Tokens produced by the vision encoder for one frame (24×24 patches).
pub const FULL_GRID_TOKENS: usize = 576;

/// Side length of the full encoder grid.
pub const FULL_GRID_SIDE: usize = 24;

/// Smallest tokens-per-frame the budget planner will allocate.
pub const MIN_TOKENS_PER_FRAME: usize = 16;
