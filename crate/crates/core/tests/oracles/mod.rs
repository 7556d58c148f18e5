//! Reference implementations that share no code with the library paths they
//! check. Also pulled into the CLI acceptance suite via `#[path]`.
#![allow(dead_code)]

/// Adaptive-average-pooling by direct enumeration of each output cell's
/// input rectangle. Bins use real-valued boundaries: cell `i` covers every
/// input index `r` whose unit interval `[r, r+1)` overlaps
/// `[i·H/out, (i+1)·H/out)`.
pub fn naive_pool(data: &[f32], h: usize, w: usize, c: usize, oh: usize, ow: usize) -> Vec<f64> {
    let covers = |i: usize, len: usize, out: usize, r: usize| -> bool {
        let lo = i as f64 * len as f64 / out as f64;
        let hi = (i + 1) as f64 * len as f64 / out as f64;
        (r as f64) < hi && (r as f64 + 1.0) > lo
    };
    let mut out = Vec::with_capacity(oh * ow * c);
    for i in 0..oh {
        for j in 0..ow {
            for ch in 0..c {
                let (mut sum, mut count) = (0.0f64, 0usize);
                for r in 0..h {
                    if !covers(i, h, oh, r) {
                        continue;
                    }
                    for col in 0..w {
                        if covers(j, w, ow, col) {
                            sum += data[(r * w + col) * c + ch] as f64;
                            count += 1;
                        }
                    }
                }
                out.push(sum / count as f64);
            }
        }
    }
    out
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(-1.0, 1.0)
    }
}

/// Merge rounds chosen by exhaustive search.
///
/// Each round enumerates every assignment of A tokens to B tokens and keeps
/// the one with the largest total similarity, then enumerates every
/// `r`-subset of A and keeps the one whose edges have the largest total
/// similarity. Returns per-round edge sets, sorted, as
/// `(a_position, b_position)`.
pub fn exhaustive_merge_rounds(tokens: &[Vec<f32>], target: usize) -> Vec<Vec<(usize, usize)>> {
    let mut cur: Vec<(Vec<f64>, u32)> = tokens
        .iter()
        .map(|t| (t.iter().map(|&v| v as f64).collect(), 1))
        .collect();
    let mut rounds = Vec::new();
    while cur.len() > target {
        let n = cur.len();
        let a: Vec<usize> = (0..n).filter(|i| i % 2 == 0).collect();
        let b: Vec<usize> = (0..n).filter(|i| i % 2 == 1).collect();
        let r = a.len().min(n - target);

        // Every assignment A -> B, as a mixed-radix counter.
        let total = b.len().pow(a.len() as u32);
        let mut best_assign = vec![0usize; a.len()];
        let mut best_score = f64::NEG_INFINITY;
        for code in 0..total {
            let mut x = code;
            let mut assign = vec![0usize; a.len()];
            // Least significant digit is the LAST A token so that lower codes
            // favour lower B indices for earlier tokens.
            for slot in (0..a.len()).rev() {
                assign[slot] = x % b.len();
                x /= b.len();
            }
            let score: f64 = assign
                .iter()
                .enumerate()
                .map(|(ai, &bi)| cosine(&cur[a[ai]].0, &cur[b[bi]].0))
                .sum();
            if score > best_score {
                best_score = score;
                best_assign = assign;
            }
        }
        let sims: Vec<f64> = best_assign
            .iter()
            .enumerate()
            .map(|(ai, &bi)| cosine(&cur[a[ai]].0, &cur[b[bi]].0))
            .collect();

        // Every r-subset of A by bitmask.
        let mut best_mask = 0u32;
        let mut best_sum = f64::NEG_INFINITY;
        for mask in 0u32..(1 << a.len()) {
            if mask.count_ones() as usize != r {
                continue;
            }
            let s: f64 = (0..a.len())
                .filter(|i| mask >> i & 1 == 1)
                .map(|i| sims[i])
                .sum();
            if s > best_sum {
                best_sum = s;
                best_mask = mask;
            }
        }
        let chosen: Vec<usize> = (0..a.len()).filter(|i| best_mask >> i & 1 == 1).collect();
        let mut edges: Vec<(usize, usize)> = chosen
            .iter()
            .map(|&ai| (a[ai], b[best_assign[ai]]))
            .collect();
        edges.sort();
        rounds.push(edges);

        let mut merged_b: Vec<(Vec<f64>, u32)> = b
            .iter()
            .map(|&bi| {
                let (v, w) = &cur[bi];
                (v.iter().map(|x| x * *w as f64).collect(), *w)
            })
            .collect();
        for &ai in &chosen {
            let (v, w) = &cur[a[ai]];
            let slot = &mut merged_b[best_assign[ai]];
            for (s, x) in slot.0.iter_mut().zip(v) {
                *s += x * *w as f64;
            }
            slot.1 += w;
        }
        let mut next: Vec<(Vec<f64>, u32)> = merged_b
            .into_iter()
            .map(|(s, w)| (s.into_iter().map(|x| x / w as f64).collect(), w))
            .collect();
        for (ai, &pos) in a.iter().enumerate() {
            if !chosen.contains(&ai) {
                next.push(cur[pos].clone());
            }
        }
        cur = next;
    }
    rounds
}

/// Indices of the `m` largest scores by rank counting: token `i` is kept
/// when fewer than `m` tokens outrank it (higher score, or equal score and
/// lower index).
pub fn rank_count_top_m(scores: &[f64], m: usize) -> Vec<usize> {
    (0..scores.len())
        .filter(|&i| {
            let outranked_by = (0..scores.len())
                .filter(|&j| scores[j] > scores[i] || (scores[j] == scores[i] && j < i))
                .count();
            outranked_by < m
        })
        .collect()
}

/// Numerically stable softmax.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// Rewrites `<Frame N>` markers by scanning characters directly.
pub fn scan_replace_markers(text: &str) -> String {
    const PREFIX: &str = "<Frame ";
    let mut out = String::new();
    let mut rest = text;
    while let Some(pos) = rest.find(PREFIX) {
        out.push_str(&rest[..pos]);
        let after = &rest[pos + PREFIX.len()..];
        let digits: String = after.chars().take_while(|c| c.is_ascii_digit()).collect();
        if !digits.is_empty() && after[digits.len()..].starts_with('>') {
            out.push_str(&format!("frame of {digits}s"));
            rest = &after[digits.len() + 1..];
        } else {
            out.push_str(PREFIX);
            rest = after;
        }
    }
    out.push_str(rest);
    out
}
