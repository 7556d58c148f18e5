//! Prompt layout for compressed videos and timestamp-marker rewriting.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::budget::FrameSamplePlan;

pub const SYSTEM_PROMPT: &str = "You are a helpful visual assistant.";
pub const IMAGE_PLACEHOLDER: &str = "<image>";
pub const SLOT_SEPARATOR: &str = "; ";
pub const INSTRUCTION_SEPARATOR: &str = "\n";
pub const MULTICHOICE_SUFFIX: &str = "Answer with only one letter";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SerializeError {
    #[error("frame plan has no timestamps")]
    EmptyPlan,
    #[error("layout uses {used} visual tokens, budget is {n_max}")]
    OverBudget { used: usize, n_max: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Segment {
    Text { text: String },
    Image { frame: usize, tokens: usize },
}

/// Model-input layout: fixed system prompt, alternating timestamp literals
/// and image slots, then the instruction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptLayout {
    pub system_prompt: String,
    pub segments: Vec<Segment>,
    pub instruction: String,
}

impl PromptLayout {
    pub fn image_slots(&self) -> usize {
        self.segments
            .iter()
            .filter(|s| matches!(s, Segment::Image { .. }))
            .count()
    }

    pub fn visual_tokens(&self) -> usize {
        self.segments
            .iter()
            .map(|s| match s {
                Segment::Image { tokens, .. } => *tokens,
                Segment::Text { .. } => 0,
            })
            .sum()
    }

    pub fn check_budget(&self, n_max: usize) -> Result<(), SerializeError> {
        let used = self.visual_tokens();
        if used > n_max {
            return Err(SerializeError::OverBudget { used, n_max });
        }
        Ok(())
    }

    /// Segments only, e.g. `1s: <image>; 2s: <image>`.
    pub fn render_skeleton(&self) -> String {
        self.segments
            .iter()
            .map(|s| match s {
                Segment::Text { text } => text.as_str(),
                Segment::Image { .. } => IMAGE_PLACEHOLDER,
            })
            .collect()
    }

    /// Skeleton, a newline, then the instruction.
    pub fn render(&self) -> String {
        format!(
            "{}{INSTRUCTION_SEPARATOR}{}",
            self.render_skeleton(),
            self.instruction
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("layout serializes")
    }
}

/// Number of `<image>` placeholders in rendered text.
pub fn count_image_slots(text: &str) -> usize {
    text.matches(IMAGE_PLACEHOLDER).count()
}

/// Whole seconds, rounded down.
fn timestamp_label(t: f64) -> String {
    format!("{}s: ", t.floor() as u64)
}

pub fn serialize_video_prompt(
    plan: &FrameSamplePlan,
    tokens_per_frame: usize,
    instruction: &str,
) -> Result<PromptLayout, SerializeError> {
    if plan.is_empty() {
        return Err(SerializeError::EmptyPlan);
    }
    let mut segments = Vec::with_capacity(plan.len() * 3);
    for (frame, &t) in plan.timestamps_s().iter().enumerate() {
        if frame > 0 {
            segments.push(Segment::Text {
                text: SLOT_SEPARATOR.to_string(),
            });
        }
        segments.push(Segment::Text {
            text: timestamp_label(t),
        });
        segments.push(Segment::Image {
            frame,
            tokens: tokens_per_frame,
        });
    }
    Ok(PromptLayout {
        system_prompt: SYSTEM_PROMPT.to_string(),
        segments,
        instruction: instruction.to_string(),
    })
}

fn frame_marker() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"<Frame ([0-9]+)>").expect("valid regex"))
}

/// Rewrites every `<Frame N>` marker to `frame of Ns`.
pub fn normalize_timestamps(text: &str) -> String {
    frame_marker()
        .replace_all(text, "frame of ${1}s")
        .into_owned()
}

/// Appends the single-letter answer instruction to a multiple-choice question.
pub fn format_multichoice(question: &str) -> String {
    format!("{question}{MULTICHOICE_SUFFIX}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::budget::plan_frame_sampling;

    fn plan(ts: &[f64], duration: f64) -> FrameSamplePlan {
        FrameSamplePlan::new(duration, ts.len().max(1), ts.to_vec()).unwrap()
    }

    #[test]
    fn two_frame_skeleton() {
        let layout = serialize_video_prompt(&plan(&[1.0, 2.0], 3.0), 100, "Describe.").unwrap();
        assert_eq!(layout.render_skeleton(), "1s: <image>; 2s: <image>");
        assert_eq!(layout.render(), "1s: <image>; 2s: <image>\nDescribe.");
        assert_eq!(layout.system_prompt, "You are a helpful visual assistant.");
        assert_eq!(layout.visual_tokens(), 200);
    }

    #[test]
    fn half_second_floors_to_zero() {
        let layout = serialize_video_prompt(&plan(&[0.5], 1.0), 16, "q").unwrap();
        assert_eq!(layout.render_skeleton(), "0s: <image>");
    }

    #[test]
    fn empty_instruction_is_valid() {
        let layout = serialize_video_prompt(&plan(&[0.5], 1.0), 16, "").unwrap();
        assert_eq!(layout.instruction, "");
        assert_eq!(layout.render(), "0s: <image>\n");
    }

    #[test]
    fn empty_plan_rejected() {
        assert_eq!(
            serialize_video_prompt(&plan(&[], 1.0), 16, "q"),
            Err(SerializeError::EmptyPlan)
        );
    }

    #[test]
    fn slots_follow_plan() {
        let p = plan_frame_sampling(300.0, 120).unwrap();
        let layout = serialize_video_prompt(&p, 100, "x").unwrap();
        assert_eq!(layout.image_slots(), 120);
        assert_eq!(count_image_slots(&layout.render()), 120);
        assert!(layout.check_budget(12_000).is_ok());
        assert_eq!(
            layout.check_budget(11_999),
            Err(SerializeError::OverBudget {
                used: 12_000,
                n_max: 11_999
            })
        );
        let frames: Vec<usize> = layout
            .segments
            .iter()
            .filter_map(|s| match s {
                Segment::Image { frame, .. } => Some(*frame),
                _ => None,
            })
            .collect();
        assert_eq!(frames, (0..120).collect::<Vec<_>>());
    }

    #[test]
    fn json_rendering() {
        let layout = serialize_video_prompt(&plan(&[1.0], 2.0), 36, "hi").unwrap();
        let json = layout.to_json();
        assert!(json.contains(r#"{"type":"image","frame":0,"tokens":36}"#));
        let back: PromptLayout = serde_json::from_str(&json).unwrap();
        assert_eq!(back, layout);
    }

    #[test]
    fn marker_rewrites() {
        assert_eq!(normalize_timestamps("<Frame 3>"), "frame of 3s");
        assert_eq!(normalize_timestamps("no markers here"), "no markers here");
        assert_eq!(
            normalize_timestamps("<Frame 12> and <Frame 3>"),
            "frame of 12s and frame of 3s"
        );
        for untouched in [
            "<frame 3>",
            "<Frame x>",
            "<Frame -1>",
            "<Frame 3 >",
            "<Frame3>",
        ] {
            assert_eq!(normalize_timestamps(untouched), untouched);
        }
    }

    #[test]
    fn multichoice_suffix() {
        assert_eq!(format_multichoice("Q?"), "Q?Answer with only one letter");
        assert_eq!(format_multichoice(""), "Answer with only one letter");
        assert_eq!(
            format_multichoice(&format_multichoice("Q?")),
            "Q?Answer with only one letterAnswer with only one letter"
        );
    }
}
