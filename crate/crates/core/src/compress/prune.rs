//! Scored token pruning.
//!
//! A two-layer perceptron scores every token,
//! `s = w2ᵀ · gelu(w1ᵀ · x + b1) + b2`, and the `m` best tokens are kept in
//! their original order. Soft mode perturbs the log-softmaxed scores with
//! seeded Gumbel noise before the top-`m` cut.

use std::path::Path;

use super::CompressError;
use crate::rng::Rng64;
use crate::tensor::{CompressedTokenSet, FormatError, TokenGrid};

pub const SCORER_MAGIC: &[u8; 4] = b"VSCR";
const SCORER_VERSION: u16 = 1;

/// Weights of the token scorer. `w1` is `channels × hidden` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ScorerParams {
    channels: usize,
    hidden: usize,
    w1: Vec<f32>,
    b1: Vec<f32>,
    w2: Vec<f32>,
    b2: f32,
}

impl ScorerParams {
    pub fn new(
        channels: usize,
        hidden: usize,
        w1: Vec<f32>,
        b1: Vec<f32>,
        w2: Vec<f32>,
        b2: f32,
    ) -> Result<Self, CompressError> {
        let shape_ok = channels > 0
            && hidden > 0
            && w1.len() == channels * hidden
            && b1.len() == hidden
            && w2.len() == hidden;
        if !shape_ok {
            return Err(CompressError::ScorerShape {
                expected: channels * hidden,
                found: w1.len(),
            });
        }
        let finite = w1.iter().chain(&b1).chain(&w2).all(|v| v.is_finite()) && b2.is_finite();
        if !finite {
            return Err(CompressError::Grid(crate::tensor::GridError::NonFinite {
                index: 0,
            }));
        }
        Ok(Self {
            channels,
            hidden,
            w1,
            b1,
            w2,
            b2,
        })
    }

    /// Seeded weights with hidden width `max(1, channels / 4)`, scaled by
    /// `1/sqrt(fan_in)`.
    pub fn random(seed: u64, channels: usize) -> Self {
        let hidden = (channels / 4).max(1);
        let mut rng = Rng64::new(seed);
        let s1 = 1.0 / (channels as f64).sqrt();
        let s2 = 1.0 / (hidden as f64).sqrt();
        let mut draw = |n: usize, scale: f64| -> Vec<f32> {
            (0..n)
                .map(|_| (rng.next_signed_unit() * scale) as f32)
                .collect()
        };
        let w1 = draw(channels * hidden, s1);
        let b1 = draw(hidden, s1);
        let w2 = draw(hidden, s2);
        let b2 = draw(1, s2)[0];
        Self {
            channels,
            hidden,
            w1,
            b1,
            w2,
            b2,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    /// Score of one token, accumulated in f64.
    pub fn score(&self, token: &[f32]) -> f64 {
        debug_assert_eq!(token.len(), self.channels);
        let mut out = f64::from(self.b2);
        for d in 0..self.hidden {
            let mut h = f64::from(self.b1[d]);
            for (c, &x) in token.iter().enumerate() {
                h += f64::from(x) * f64::from(self.w1[c * self.hidden + d]);
            }
            out += gelu(h) * f64::from(self.w2[d]);
        }
        out
    }

    pub fn score_grid(&self, grid: &TokenGrid) -> Result<Vec<f64>, CompressError> {
        if grid.channels() != self.channels {
            return Err(CompressError::ScorerShape {
                expected: self.channels,
                found: grid.channels(),
            });
        }
        Ok(grid.tokens().map(|t| self.score(t)).collect())
    }
}

/// GELU, tanh approximation.
pub fn gelu(x: f64) -> f64 {
    const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
    0.5 * x * (1.0 + (SQRT_2_OVER_PI * (x + 0.044_715 * x * x * x)).tanh())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GumbelMode {
    Hard,
    Soft,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GumbelConfig {
    pub temperature: f64,
    pub seed: u64,
    pub mode: GumbelMode,
}

impl GumbelConfig {
    pub fn hard() -> Self {
        Self {
            temperature: 1.0,
            seed: 0,
            mode: GumbelMode::Hard,
        }
    }

    pub fn soft(temperature: f64, seed: u64) -> Self {
        Self {
            temperature,
            seed,
            mode: GumbelMode::Soft,
        }
    }
}

/// Indices of the `m` selected tokens, ascending.
///
/// Hard mode ranks by raw score. Soft mode ranks by
/// `(log_softmax(s)_i + g_i) / τ` with `g_i = -ln(-ln u_i)` and `u_i` drawn
/// from [`Rng64`] seeded with `cfg.seed`. Ties go to the lower index.
pub fn select_tokens(
    scores: &[f64],
    m: usize,
    cfg: &GumbelConfig,
) -> Result<Vec<usize>, CompressError> {
    let n = scores.len();
    if m == 0 || m > n {
        return Err(CompressError::InvalidTarget {
            target: m,
            available: n,
        });
    }
    if !(cfg.temperature.is_finite() && cfg.temperature > 0.0) {
        return Err(CompressError::InvalidTemperature(cfg.temperature));
    }
    let keys: Vec<f64> = match cfg.mode {
        GumbelMode::Hard => scores.to_vec(),
        GumbelMode::Soft => {
            let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let log_z = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
            let mut rng = Rng64::new(cfg.seed);
            scores
                .iter()
                .map(|s| {
                    let g = -(-rng.next_open01().ln()).ln();
                    (s - log_z + g) / cfg.temperature
                })
                .collect()
        }
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| keys[b].total_cmp(&keys[a]).then(a.cmp(&b)));
    let mut kept = order[..m].to_vec();
    kept.sort_unstable();
    Ok(kept)
}

/// Keeps `m` tokens of `grid` chosen by the scorer. Every kept token has
/// weight 1, so the set's source count equals `m`.
pub fn prune_top_k(
    grid: &TokenGrid,
    m: usize,
    params: &ScorerParams,
    cfg: &GumbelConfig,
) -> Result<CompressedTokenSet, CompressError> {
    let scores = params.score_grid(grid)?;
    let kept = select_tokens(&scores, m, cfg)?;
    let mut data = Vec::with_capacity(m * grid.channels());
    for &i in &kept {
        data.extend_from_slice(grid.token(i));
    }
    Ok(CompressedTokenSet::new(
        grid.channels(),
        data,
        vec![1; m],
        m,
    )?)
}

pub fn encode_scorer(params: &ScorerParams) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(SCORER_MAGIC);
    out.extend_from_slice(&SCORER_VERSION.to_le_bytes());
    out.extend_from_slice(&[0, 0]);
    out.extend_from_slice(&(params.channels as u32).to_le_bytes());
    out.extend_from_slice(&(params.hidden as u32).to_le_bytes());
    for v in params
        .w1
        .iter()
        .chain(&params.b1)
        .chain(&params.w2)
        .chain(std::iter::once(&params.b2))
    {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_scorer(bytes: &[u8]) -> Result<ScorerParams, FormatError> {
    if bytes.len() < 4 || &bytes[..4] != SCORER_MAGIC {
        return Err(FormatError::BadMagic {
            found: bytes.iter().take(4).copied().collect(),
            expected: *SCORER_MAGIC,
        });
    }
    if bytes.len() < 16 {
        return Err(FormatError::Truncated {
            needed: 16,
            available: bytes.len(),
        });
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != SCORER_VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    let channels = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let hidden = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    if channels == 0 || hidden == 0 {
        return Err(FormatError::DimensionMismatch(format!(
            "scorer declares {channels}x{hidden}"
        )));
    }
    let count = channels * hidden + 2 * hidden + 1;
    let needed = 16 + 4 * count;
    if bytes.len() < needed {
        return Err(FormatError::Truncated {
            needed,
            available: bytes.len(),
        });
    }
    if bytes.len() > needed {
        return Err(FormatError::DimensionMismatch(format!(
            "{} trailing bytes",
            bytes.len() - needed
        )));
    }
    let vals: Vec<f32> = bytes[16..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(FormatError::NonFinite { frame: 0 });
    }
    let (w1, rest) = vals.split_at(channels * hidden);
    let (b1, rest) = rest.split_at(hidden);
    let (w2, b2) = rest.split_at(hidden);
    Ok(ScorerParams {
        channels,
        hidden,
        w1: w1.to_vec(),
        b1: b1.to_vec(),
        w2: w2.to_vec(),
        b2: b2[0],
    })
}

pub fn write_scorer_file(params: &ScorerParams, path: impl AsRef<Path>) -> Result<(), FormatError> {
    crate::tensor::write_atomic(path.as_ref(), &encode_scorer(params))
}

pub fn read_scorer_file(path: impl AsRef<Path>) -> Result<ScorerParams, FormatError> {
    decode_scorer(&std::fs::read(path)?)
}
