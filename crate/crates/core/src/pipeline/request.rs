//! Annotation requests built from prompt templates.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CaptionRecord, Category, PipelineError, Source};
use crate::budget::{plan_frame_sampling, FrameSamplePlan};
use crate::rng::Rng64;

/// Frame cap for any request (long HDVILA videos).
pub const MAX_REQUEST_FRAMES: usize = 256;
/// Default frame cap for HDVILA videos.
pub const HDVILA_DEFAULT_FRAMES: usize = 128;

const BUILTIN: [(Category, &str); 5] = [
    (
        Category::Perception,
        include_str!("../../assets/templates/perception.txt"),
    ),
    (
        Category::General,
        include_str!("../../assets/templates/general.txt"),
    ),
    (
        Category::Temporal,
        include_str!("../../assets/templates/temporal.txt"),
    ),
    (
        Category::Reasoning,
        include_str!("../../assets/templates/reasoning.txt"),
    ),
    (
        Category::Formatting,
        include_str!("../../assets/templates/formatting.txt"),
    ),
];

/// One prompt template per category, with `{caption}`, `{frames}` and
/// `{duration}` placeholders. When a request carries no caption, every
/// template line containing `{caption}` is dropped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Templates(BTreeMap<Category, String>);

impl Default for Templates {
    fn default() -> Self {
        Self(BUILTIN.iter().map(|(c, t)| (*c, t.to_string())).collect())
    }
}

impl Templates {
    /// Loads `<category>.txt` for all five categories from `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self, PipelineError> {
        let mut map = BTreeMap::new();
        for c in Category::ALL {
            let path = dir.join(format!("{c}.txt"));
            let text =
                std::fs::read_to_string(&path).map_err(|e| PipelineError::io(path.display(), e))?;
            map.insert(c, text);
        }
        Ok(Self(map))
    }

    pub fn get(&self, category: Category) -> Result<&str, PipelineError> {
        self.0
            .get(&category)
            .map(String::as_str)
            .ok_or_else(|| PipelineError::MissingTemplate(category.to_string()))
    }

    pub fn render(
        &self,
        category: Category,
        caption: Option<&str>,
        frames: &str,
        duration_s: f64,
    ) -> Result<String, PipelineError> {
        let template = self.get(category)?;
        let duration = format!("{duration_s:.1}");
        let lines: Vec<String> = template
            .lines()
            .filter(|l| caption.is_some() || !l.contains("{caption}"))
            .map(|l| {
                l.replace("{caption}", caption.unwrap_or(""))
                    .replace("{frames}", frames)
                    .replace("{duration}", &duration)
            })
            .collect();
        Ok(lines.join("\n"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRef {
    pub index: usize,
    pub timestamp_s: f64,
}

/// Everything the annotation model is asked for one video and category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRequest {
    pub template_id: String,
    pub video_id: String,
    pub category: Category,
    pub source: Source,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub caption: Option<String>,
    pub duration_s: f64,
    pub frames: Vec<FrameRef>,
    pub prompt: String,
    /// Selects the mock fixture; ignored by live clients.
    pub seed: u64,
}

impl AnnotationRequest {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("request serializes")
    }
}

/// Frame markers for the prompt, numbered by whole second.
fn frame_markers(plan: &FrameSamplePlan) -> String {
    let markers: Vec<String> = plan
        .timestamps_s()
        .iter()
        .map(|t| format!("<Frame {}>", t.floor() as u64))
        .collect();
    format!("{} frames ({})", plan.len(), markers.join(", "))
}

/// Builds the request for `record` under `category`.
///
/// WebVid captions are passed to the model; InternVid captions are withheld.
/// Other sources pass their caption when it is non-empty.
pub fn build_annotation_request(
    record: &CaptionRecord,
    category: Category,
    plan: &FrameSamplePlan,
    templates: &Templates,
) -> Result<AnnotationRequest, PipelineError> {
    if plan.len() > MAX_REQUEST_FRAMES {
        return Err(PipelineError::TooManyFrames {
            frames: plan.len(),
            max: MAX_REQUEST_FRAMES,
        });
    }
    let caption = match record.source {
        Source::Internvid => None,
        Source::Webvid => Some(record.caption.clone()),
        Source::Hdvila | Source::Other => {
            Some(record.caption.clone()).filter(|c| !c.trim().is_empty())
        }
    };
    let prompt = templates.render(
        category,
        caption.as_deref(),
        &frame_markers(plan),
        record.duration_s,
    )?;
    Ok(AnnotationRequest {
        template_id: category.to_string(),
        video_id: record.video_id.clone(),
        category,
        source: record.source,
        caption,
        duration_s: record.duration_s,
        frames: plan
            .timestamps_s()
            .iter()
            .enumerate()
            .map(|(index, &timestamp_s)| FrameRef { index, timestamp_s })
            .collect(),
        prompt,
        seed: 0,
    })
}

/// Sampling plan used when annotating `record`.
///
/// HDVILA videos get up to 128 frames, or 256 for the seeded
/// `long_video_fraction` of them; everything else is sampled at 1 FPS,
/// capped at 256 frames.
pub fn frame_plan_for(
    record: &CaptionRecord,
    seed: u64,
    long_video_fraction: f64,
) -> Result<FrameSamplePlan, PipelineError> {
    let cap = match record.source {
        Source::Hdvila => {
            let mut rng = Rng64::new(seed ^ super::fnv1a(&record.video_id) ^ 0x4C4F_4E47);
            if rng.next_f64() < long_video_fraction {
                MAX_REQUEST_FRAMES
            } else {
                HDVILA_DEFAULT_FRAMES
            }
        }
        _ => (record.duration_s.floor() as usize + 1).min(MAX_REQUEST_FRAMES),
    };
    plan_frame_sampling(record.duration_s, cap).map_err(|e| PipelineError::InvalidRecord {
        line: 0,
        reason: e.to_string(),
    })
}
