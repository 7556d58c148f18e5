//! Iterated bipartite soft matching.
//!
//! One round splits the current token list into set A (even positions) and
//! set B (odd positions), links every A token to its most cosine-similar B
//! token, and folds the `r` most similar A tokens into their partners, with
//! `r = min(|A|, tokens_left - target)`. The surviving list is B in order
//! followed by the unmerged A tokens in order. Rounds repeat until exactly
//! the target count remains. Merged tokens are size-weighted means, so
//! `Σ weight · token` is conserved.

use super::similarity::cosine_similarity_f64;
use super::CompressError;
use crate::tensor::{CompressedTokenSet, TokenGrid};

pub const MAX_MERGE_RATIO: f64 = 49.0;

/// Reduction factor `k = N / M`, in `[1, 49]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct MergeRatio(f64);

impl MergeRatio {
    pub fn new(k: f64) -> Result<Self, CompressError> {
        if !k.is_finite() || !(1.0..=MAX_MERGE_RATIO).contains(&k) {
            return Err(CompressError::InvalidRatio(k));
        }
        Ok(Self(k))
    }

    pub fn k(&self) -> f64 {
        self.0
    }

    /// `max(1, round(n / k))`.
    pub fn target_for(&self, n: usize) -> usize {
        ((n as f64 / self.0).round() as usize).max(1)
    }
}

/// Edges merged in one round, as `(a_position, b_position)` indices into the
/// token list at the start of that round, in selection order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MergeRound {
    pub tokens_before: usize,
    pub edges: Vec<(usize, usize)>,
}

pub fn bipartite_soft_match_merge(
    grid: &TokenGrid,
    ratio: MergeRatio,
) -> Result<CompressedTokenSet, CompressError> {
    let n = grid.num_tokens();
    if n < 2 && ratio.k() > 1.0 {
        return Err(CompressError::TooFewTokens);
    }
    merge_to_count(grid, ratio.target_for(n))
}

/// Merges `grid` down to exactly `target` tokens.
pub fn merge_to_count(
    grid: &TokenGrid,
    target: usize,
) -> Result<CompressedTokenSet, CompressError> {
    run(grid, target, None)
}

/// Like [`merge_to_count`], also returning the edges merged in each round.
pub fn merge_with_trace(
    grid: &TokenGrid,
    target: usize,
) -> Result<(CompressedTokenSet, Vec<MergeRound>), CompressError> {
    let mut rounds = Vec::new();
    let set = run(grid, target, Some(&mut rounds))?;
    Ok((set, rounds))
}

struct Token {
    mean: Vec<f64>,
    weight: u32,
}

fn run(
    grid: &TokenGrid,
    target: usize,
    mut trace: Option<&mut Vec<MergeRound>>,
) -> Result<CompressedTokenSet, CompressError> {
    let n = grid.num_tokens();
    if target == 0 || target > n {
        return Err(CompressError::InvalidTarget {
            target,
            available: n,
        });
    }
    let c = grid.channels();
    let mut tokens: Vec<Token> = grid
        .tokens()
        .map(|t| Token {
            mean: t.iter().map(|&v| f64::from(v)).collect(),
            weight: 1,
        })
        .collect();

    while tokens.len() > target {
        let len = tokens.len();
        let a_pos: Vec<usize> = (0..len).step_by(2).collect();
        let b_pos: Vec<usize> = (1..len).step_by(2).collect();
        let r = a_pos.len().min(len - target);

        let best: Vec<(f64, usize)> = a_pos
            .iter()
            .map(|&a| {
                let mut best = (f64::NEG_INFINITY, 0usize);
                for (bi, &b) in b_pos.iter().enumerate() {
                    let s = cosine_similarity_f64(&tokens[a].mean, &tokens[b].mean);
                    if s > best.0 {
                        best = (s, bi);
                    }
                }
                best
            })
            .collect();

        let mut order: Vec<usize> = (0..a_pos.len()).collect();
        order.sort_by(|&x, &y| best[y].0.total_cmp(&best[x].0).then(x.cmp(&y)));
        let chosen = &order[..r];

        if let Some(rounds) = trace.as_deref_mut() {
            rounds.push(MergeRound {
                tokens_before: len,
                edges: chosen
                    .iter()
                    .map(|&ai| (a_pos[ai], b_pos[best[ai].1]))
                    .collect(),
            });
        }

        let mut merged = vec![false; a_pos.len()];
        let mut sums: Vec<(Vec<f64>, u32)> = b_pos
            .iter()
            .map(|&b| {
                let t = &tokens[b];
                (
                    t.mean.iter().map(|v| v * f64::from(t.weight)).collect(),
                    t.weight,
                )
            })
            .collect();
        for &ai in chosen {
            merged[ai] = true;
            let src = &tokens[a_pos[ai]];
            let (sum, w) = &mut sums[best[ai].1];
            for (s, v) in sum.iter_mut().zip(&src.mean) {
                *s += v * f64::from(src.weight);
            }
            *w += src.weight;
        }

        let mut next: Vec<Token> = sums
            .into_iter()
            .map(|(sum, weight)| Token {
                mean: sum.into_iter().map(|s| s / f64::from(weight)).collect(),
                weight,
            })
            .collect();
        let mut old: Vec<Option<Token>> = tokens.into_iter().map(Some).collect();
        for (ai, &a) in a_pos.iter().enumerate() {
            if !merged[ai] {
                next.push(old[a].take().expect("each A token moves once"));
            }
        }
        tokens = next;
    }

    let mut data = Vec::with_capacity(tokens.len() * c);
    let mut weights = Vec::with_capacity(tokens.len());
    for t in &tokens {
        data.extend(t.mean.iter().map(|&v| v as f32));
        weights.push(t.weight);
    }
    Ok(CompressedTokenSet::new(c, data, weights, n)?)
}
