//! Visual-context budget arithmetic and frame sampling.
//!
//! A video gets at most `n_max` visual tokens. The planner trades frame
//! count against tokens per frame, snaps token counts onto square pooling
//! shapes, and places sample timestamps.

use std::io::Write;

use thiserror::Error;

use crate::compress::PoolShape;
use crate::{FULL_GRID_SIDE, FULL_GRID_TOKENS, MIN_TOKENS_PER_FRAME};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BudgetError {
    #[error("budget {n_max} cannot give {frames} frames {min} tokens each")]
    BudgetTooSmall {
        n_max: usize,
        frames: usize,
        min: usize,
    },
    #[error("frame count must be at least 1")]
    NoFrames,
    #[error("token target {0} is below the minimum of 16")]
    TargetTooSmall(usize),
    #[error("duration must be positive and finite, got {0}")]
    InvalidDuration(f64),
    #[error("tokens per frame must be positive")]
    ZeroTokensPerFrame,
    #[error("plan violates its invariants: {0}")]
    InvalidPlan(String),
}

/// Resolved allocation of a visual-token budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BudgetPlan {
    n_max: usize,
    frame_count: usize,
    tokens_per_frame: usize,
    realized_shape: Option<PoolShape>,
}

impl BudgetPlan {
    pub fn new(
        n_max: usize,
        frame_count: usize,
        tokens_per_frame: usize,
        realized_shape: Option<PoolShape>,
    ) -> Result<Self, BudgetError> {
        if frame_count == 0 {
            return Err(BudgetError::NoFrames);
        }
        if !(MIN_TOKENS_PER_FRAME..=FULL_GRID_TOKENS).contains(&tokens_per_frame) {
            return Err(BudgetError::InvalidPlan(format!(
                "tokens_per_frame {tokens_per_frame} outside [16, 576]"
            )));
        }
        if frame_count * tokens_per_frame > n_max {
            return Err(BudgetError::InvalidPlan(format!(
                "{frame_count} frames x {tokens_per_frame} tokens exceeds {n_max}"
            )));
        }
        if let Some(shape) = realized_shape {
            if shape.token_count() > tokens_per_frame {
                return Err(BudgetError::InvalidPlan(format!(
                    "shape {}x{} exceeds {tokens_per_frame} tokens",
                    shape.side(),
                    shape.side()
                )));
            }
        }
        Ok(Self {
            n_max,
            frame_count,
            tokens_per_frame,
            realized_shape,
        })
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn frame_count(&self) -> usize {
        self.frame_count
    }

    pub fn tokens_per_frame(&self) -> usize {
        self.tokens_per_frame
    }

    pub fn realized_shape(&self) -> Option<PoolShape> {
        self.realized_shape
    }

    pub fn total_tokens(&self) -> usize {
        self.frame_count * self.tokens_per_frame
    }
}

/// Range tokens-per-frame is drawn from during training:
/// `(16, min(n_max / frames, 576))`.
pub fn training_token_interval(
    n_max: usize,
    frame_count: usize,
) -> Result<(usize, usize), BudgetError> {
    if frame_count == 0 {
        return Err(BudgetError::NoFrames);
    }
    if n_max < MIN_TOKENS_PER_FRAME * frame_count {
        return Err(BudgetError::BudgetTooSmall {
            n_max,
            frames: frame_count,
            min: MIN_TOKENS_PER_FRAME,
        });
    }
    Ok((
        MIN_TOKENS_PER_FRAME,
        (n_max / frame_count).min(FULL_GRID_TOKENS),
    ))
}

/// Fixed tokens-per-frame at inference: `min(n_max / frames, 576)`, never
/// below 16. A zero frame count is treated as one frame.
pub fn inference_tokens_per_frame(n_max: usize, frame_count: usize) -> usize {
    (n_max / frame_count.max(1)).clamp(MIN_TOKENS_PER_FRAME, FULL_GRID_TOKENS)
}

/// Frames that fit: `n_max / tokens_per_frame`. Zero tokens per frame
/// yields 0.
pub fn max_frames(n_max: usize, tokens_per_frame: usize) -> usize {
    n_max.checked_div(tokens_per_frame).unwrap_or(0)
}

/// Inference allocation for up to `frame_count` frames.
///
/// Tokens per frame come from [`inference_tokens_per_frame`]. When the
/// 16-token floor binds, the frame count drops to `n_max / 16` so the plan
/// stays within budget. `pooled` also snaps the count onto a square shape.
pub fn plan_budget(
    n_max: usize,
    frame_count: usize,
    pooled: bool,
) -> Result<BudgetPlan, BudgetError> {
    if frame_count == 0 {
        return Err(BudgetError::NoFrames);
    }
    let tpf = inference_tokens_per_frame(n_max, frame_count);
    let frames = frame_count.min(max_frames(n_max, tpf));
    if frames == 0 {
        return Err(BudgetError::BudgetTooSmall {
            n_max,
            frames: frame_count,
            min: MIN_TOKENS_PER_FRAME,
        });
    }
    let shape = if pooled {
        Some(snap_to_grid(tpf)?)
    } else {
        None
    };
    let tpf = shape.map_or(tpf, |s| s.token_count());
    BudgetPlan::new(n_max, frames, tpf, shape)
}

/// Largest square pooling shape with at most `min(target, 576)` tokens.
pub fn snap_to_grid(target_tokens: usize) -> Result<PoolShape, BudgetError> {
    if target_tokens < MIN_TOKENS_PER_FRAME {
        return Err(BudgetError::TargetTooSmall(target_tokens));
    }
    let capped = target_tokens.min(FULL_GRID_TOKENS);
    let mut side = (capped as f64).sqrt() as usize;
    while side * side > capped {
        side -= 1;
    }
    while (side + 1) * (side + 1) <= capped {
        side += 1;
    }
    let side = side.min(FULL_GRID_SIDE);
    Ok(PoolShape::square(side).expect("side within [4, 24]"))
}

/// Sample times for one video.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSamplePlan {
    duration_s: f64,
    max_frames: usize,
    timestamps_s: Vec<f64>,
}

impl FrameSamplePlan {
    pub fn new(
        duration_s: f64,
        max_frames: usize,
        timestamps_s: Vec<f64>,
    ) -> Result<Self, BudgetError> {
        if !(duration_s.is_finite() && duration_s > 0.0) {
            return Err(BudgetError::InvalidDuration(duration_s));
        }
        if max_frames == 0 {
            return Err(BudgetError::NoFrames);
        }
        if timestamps_s.len() > max_frames {
            return Err(BudgetError::InvalidPlan(format!(
                "{} timestamps exceed max_frames {max_frames}",
                timestamps_s.len()
            )));
        }
        for (i, &t) in timestamps_s.iter().enumerate() {
            if !(0.0..=duration_s).contains(&t) || (i > 0 && t <= timestamps_s[i - 1]) {
                return Err(BudgetError::InvalidPlan(format!(
                    "bad timestamp {t} at {i}"
                )));
            }
        }
        Ok(Self {
            duration_s,
            max_frames,
            timestamps_s,
        })
    }

    pub fn duration_s(&self) -> f64 {
        self.duration_s
    }

    pub fn max_frames(&self) -> usize {
        self.max_frames
    }

    pub fn timestamps_s(&self) -> &[f64] {
        &self.timestamps_s
    }

    pub fn len(&self) -> usize {
        self.timestamps_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps_s.is_empty()
    }
}

/// 1 FPS at frame centres (`i + 0.5`) when the video is shorter than
/// `max_frames` seconds, otherwise `max_frames` uniform bin centres.
/// Clips under one second get a single frame at their midpoint.
pub fn plan_frame_sampling(
    duration_s: f64,
    max_frames: usize,
) -> Result<FrameSamplePlan, BudgetError> {
    if !(duration_s.is_finite() && duration_s > 0.0) {
        return Err(BudgetError::InvalidDuration(duration_s));
    }
    if max_frames == 0 {
        return Err(BudgetError::NoFrames);
    }
    let timestamps = if duration_s < max_frames as f64 {
        let whole = duration_s.floor() as usize;
        if whole == 0 {
            vec![duration_s / 2.0]
        } else {
            (0..whole).map(|i| i as f64 + 0.5).collect()
        }
    } else {
        let step = duration_s / max_frames as f64;
        (0..max_frames).map(|i| (i as f64 + 0.5) * step).collect()
    };
    FrameSamplePlan::new(duration_s, max_frames, timestamps)
}

/// One row of the budget table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CostRow {
    pub tokens_per_frame: usize,
    pub n_max: usize,
    pub max_frames: usize,
}

pub const COST_TABLE_HEADER: &str = "tokens_per_frame,n_max,max_frames";

/// Budgets and tokens-per-frame values of the reference ablation table.
/// The 8000-token block uses 140 where the others use 144.
pub fn reference_preset() -> Vec<(usize, Vec<usize>)> {
    vec![
        (12_000, vec![36, 64, 100, 144, 256]),
        (8_000, vec![36, 64, 100, 140, 256]),
        (4_000, vec![36, 64, 100, 144, 256]),
    ]
}

/// Cross product of budgets and tokens-per-frame values, budget-major.
pub fn sweep_cost_table(n_max_values: &[usize], tpf_values: &[usize]) -> Vec<CostRow> {
    let blocks: Vec<(usize, Vec<usize>)> = n_max_values
        .iter()
        .map(|&n| (n, tpf_values.to_vec()))
        .collect();
    sweep_blocks(&blocks)
}

/// Like [`sweep_cost_table`] with a separate tokens-per-frame list per budget.
pub fn sweep_blocks(blocks: &[(usize, Vec<usize>)]) -> Vec<CostRow> {
    blocks
        .iter()
        .flat_map(|(n_max, tpfs)| {
            tpfs.iter().map(move |&tpf| CostRow {
                tokens_per_frame: tpf,
                n_max: *n_max,
                max_frames: max_frames(*n_max, tpf),
            })
        })
        .collect()
}

pub fn write_cost_csv<W: Write>(rows: &[CostRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{COST_TABLE_HEADER}")?;
    for r in rows {
        writeln!(out, "{},{},{}", r.tokens_per_frame, r.n_max, r.max_frames)?;
    }
    Ok(())
}

pub fn cost_csv_string(rows: &[CostRow]) -> String {
    let mut buf = Vec::new();
    write_cost_csv(rows, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("ascii")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn training_interval_examples() {
        assert_eq!(training_token_interval(12_000, 256), Ok((16, 46)));
        assert_eq!(training_token_interval(12_000, 1), Ok((16, 576)));
        assert!(matches!(
            training_token_interval(12_000, 751),
            Err(BudgetError::BudgetTooSmall { .. })
        ));
        assert_eq!(training_token_interval(12_000, 750), Ok((16, 16)));
    }

    #[test]
    fn inference_examples() {
        assert_eq!(inference_tokens_per_frame(12_000, 120), 100);
        assert_eq!(inference_tokens_per_frame(12_000, 10), 576);
        assert_eq!(inference_tokens_per_frame(4_000, 256), 16);
    }

    #[test]
    fn max_frames_examples() {
        assert_eq!(max_frames(12_000, 36), 333);
        assert_eq!(max_frames(8_000, 140), 57);
        assert_eq!(max_frames(4_000, 256), 15);
        assert_eq!(max_frames(10, 0), 0);
    }

    #[test]
    fn plan_budget_drops_frames_when_floor_binds() {
        let p = plan_budget(4_000, 256, false).unwrap();
        assert_eq!(p.tokens_per_frame(), 16);
        assert_eq!(p.frame_count(), 250);
        assert!(p.total_tokens() <= 4_000);
        let p = plan_budget(12_000, 120, true).unwrap();
        assert_eq!((p.frame_count(), p.tokens_per_frame()), (120, 100));
        assert_eq!(p.realized_shape(), Some(PoolShape::square(10).unwrap()));
        assert!(plan_budget(15, 1, false).is_err());
    }

    #[test]
    fn budget_plan_rejects_overspend() {
        assert!(BudgetPlan::new(100, 7, 16, None).is_err());
        assert!(BudgetPlan::new(10_000, 1, 600, None).is_err());
        assert!(BudgetPlan::new(10_000, 0, 16, None).is_err());
        assert!(BudgetPlan::new(112, 7, 16, None).is_ok());
    }

    #[test]
    fn sampling_one_fps() {
        let p = plan_frame_sampling(60.0, 120).unwrap();
        let want: Vec<f64> = (0..60).map(|i| i as f64 + 0.5).collect();
        assert_eq!(p.timestamps_s(), want.as_slice());
    }

    #[test]
    fn sampling_uniform() {
        let p = plan_frame_sampling(300.0, 120).unwrap();
        assert_eq!(p.len(), 120);
        assert_eq!(p.timestamps_s()[0], 1.25);
        for w in p.timestamps_s().windows(2) {
            assert!((w[1] - w[0] - 2.5).abs() < 1e-9);
        }
    }

    #[test]
    fn sampling_short_clip() {
        assert_eq!(
            plan_frame_sampling(0.4, 120).unwrap().timestamps_s(),
            &[0.2]
        );
        assert_eq!(plan_frame_sampling(59.5, 120).unwrap().len(), 59);
        assert!(matches!(
            plan_frame_sampling(0.0, 10),
            Err(BudgetError::InvalidDuration(_))
        ));
        assert!(plan_frame_sampling(-1.0, 10).is_err());
        assert!(plan_frame_sampling(f64::NAN, 10).is_err());
    }

    #[test]
    fn snap_examples() {
        assert_eq!(snap_to_grid(100).unwrap().side(), 10);
        assert_eq!(snap_to_grid(576).unwrap().side(), 24);
        assert_eq!(snap_to_grid(120).unwrap().side(), 10);
        assert_eq!(snap_to_grid(10_000).unwrap().side(), 24);
        assert_eq!(snap_to_grid(16).unwrap().side(), 4);
        assert_eq!(snap_to_grid(15), Err(BudgetError::TargetTooSmall(15)));
    }

    #[test]
    fn sweep_examples() {
        assert_eq!(
            sweep_cost_table(&[576], &[576]),
            vec![CostRow {
                tokens_per_frame: 576,
                n_max: 576,
                max_frames: 1
            }]
        );
        assert_eq!(sweep_cost_table(&[16_000], &[100])[0].max_frames, 160);
        let csv = cost_csv_string(&sweep_cost_table(&[100], &[10, 30]));
        assert_eq!(
            csv,
            "tokens_per_frame,n_max,max_frames\n10,100,10\n30,100,3\n"
        );
    }
}
