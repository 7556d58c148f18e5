//! Synthetic video QA construction at desk scale.
//!
//! Stages: caption dedup, noun-chunk frequency downsampling, per-category
//! annotation requests, an annotation client (deterministic mock or live
//! chat-completion endpoint) and response filtering. [`run_pipeline`] chains
//! them; [`run_from_config`] adds file I/O.

mod captions;
mod client;
mod config;
mod filter;
pub mod fixtures;
mod request;
mod run;

pub use captions::{
    chunk_frequencies, dedup_captions, downsample_by_chunk_frequency, extract_noun_chunks,
    normalize_caption, StopWords,
};
pub use client::{
    AnnotationClient, ChatMessage, ChatRequest, ClientError, HttpClient, HttpClientConfig,
    MockClient, MockFixture, RetryPolicy,
};
pub use config::{parse_kv, ClientMode, PipelineConfig, ENV_PREFIX};
pub use filter::{
    filter_responses, filter_responses_with, DropCounts, DropReason, FilterOutcome, RefusalPhrases,
};
pub use request::{
    build_annotation_request, frame_plan_for, AnnotationRequest, FrameRef, Templates,
    MAX_REQUEST_FRAMES,
};
pub use run::{
    read_captions, run_from_config, run_pipeline, write_jsonl, Assets, PipelineOptions,
    PipelineOutput, PipelineReport,
};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config error: {0}")]
    Config(String),
    #[error("invalid record at line {line}: {reason}")]
    InvalidRecord { line: usize, reason: String },
    #[error("unknown category {0:?}")]
    UnknownCategory(String),
    #[error("unknown source {0:?}")]
    UnknownSource(String),
    #[error("frame plan has {frames} frames, requests allow at most {max}")]
    TooManyFrames { frames: usize, max: usize },
    #[error("template {0:?} is missing")]
    MissingTemplate(String),
    #[error(transparent)]
    Client(#[from] ClientError),
}

impl PipelineError {
    pub(crate) fn io(path: impl fmt::Display, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_string(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Webvid,
    Internvid,
    Hdvila,
    Other,
}

impl FromStr for Source {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "webvid" => Ok(Source::Webvid),
            "internvid" => Ok(Source::Internvid),
            "hdvila" => Ok(Source::Hdvila),
            "other" => Ok(Source::Other),
            _ => Err(PipelineError::UnknownSource(s.to_string())),
        }
    }
}

/// One source video with its original caption.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionRecord {
    pub video_id: String,
    pub caption: String,
    pub duration_s: f64,
    pub source: Source,
}

impl CaptionRecord {
    pub fn validate(&self) -> Result<(), String> {
        if self.video_id.trim().is_empty() {
            return Err("video_id is empty".into());
        }
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(format!("duration_s {} is not positive", self.duration_s));
        }
        Ok(())
    }
}

/// Task family a QA pair is generated for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Perception,
    General,
    Temporal,
    Reasoning,
    Formatting,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::Perception,
        Category::General,
        Category::Temporal,
        Category::Reasoning,
        Category::Formatting,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Perception => "perception",
            Category::General => "general",
            Category::Temporal => "temporal",
            Category::Reasoning => "reasoning",
            Category::Formatting => "formatting",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| PipelineError::UnknownCategory(s.to_string()))
    }
}

/// One generated question-answer pair. Field order is the JSONL key order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QARecord {
    pub video_id: String,
    pub question: String,
    pub answer: String,
    pub category: Category,
    pub frame_timestamps_s: Vec<f64>,
    pub provenance: String,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct ChunkStats {
    pub chunk: String,
    pub frequency: usize,
}

/// FNV-1a, used to derive per-record seeds from ids.
pub(crate) fn fnv1a(text: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn category_names() {
        for c in Category::ALL {
            assert_eq!(c.as_str().parse::<Category>().unwrap(), c);
            assert_eq!(serde_json::to_string(&c).unwrap(), format!("\"{c}\""));
        }
        assert!(matches!(
            "humor".parse::<Category>(),
            Err(PipelineError::UnknownCategory(_))
        ));
    }

    #[test]
    fn source_parse() {
        assert_eq!("WebVid".parse::<Source>().unwrap(), Source::Webvid);
        assert!("youtube".parse::<Source>().is_err());
    }

    #[test]
    fn record_validation() {
        let mut r = CaptionRecord {
            video_id: "v".into(),
            caption: "c".into(),
            duration_s: 1.0,
            source: Source::Other,
        };
        assert!(r.validate().is_ok());
        r.duration_s = 0.0;
        assert!(r.validate().is_err());
        r.duration_s = 1.0;
        r.video_id = " ".into();
        assert!(r.validate().is_err());
    }

    #[test]
    fn qa_key_order_is_fixed() {
        let qa = QARecord {
            video_id: "v1".into(),
            question: "q".into(),
            answer: "a".into(),
            category: Category::Temporal,
            frame_timestamps_s: vec![0.5, 1.5],
            provenance: "mock".into(),
        };
        assert_eq!(
            serde_json::to_string(&qa).unwrap(),
            r#"{"video_id":"v1","question":"q","answer":"a","category":"temporal","frame_timestamps_s":[0.5,1.5],"provenance":"mock"}"#
        );
    }
}
