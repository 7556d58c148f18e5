//! Response filtering.

use serde::Deserialize;

use super::QARecord;
use crate::serialize::normalize_timestamps;

const DEFAULT_REFUSALS: &str = include_str!("../../assets/refusals.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DropReason {
    /// Not a JSON object with string `question` and `answer` fields.
    Malformed,
    Refusal,
    EmptyField,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DropCounts {
    pub malformed: usize,
    pub refusal: usize,
    pub empty_field: usize,
}

impl DropCounts {
    pub fn total(&self) -> usize {
        self.malformed + self.refusal + self.empty_field
    }

    fn bump(&mut self, reason: DropReason) {
        match reason {
            DropReason::Malformed => self.malformed += 1,
            DropReason::Refusal => self.refusal += 1,
            DropReason::EmptyField => self.empty_field += 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutcome {
    pub kept: Vec<QARecord>,
    pub drops: DropCounts,
}

/// Lowercase substrings marking a refused answer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RefusalPhrases(Vec<String>);

impl RefusalPhrases {
    pub fn parse(text: &str) -> Self {
        Self(
            text.lines()
                .map(|l| l.split('#').next().unwrap_or("").trim().to_lowercase())
                .filter(|l| !l.is_empty())
                .collect(),
        )
    }

    pub fn matches(&self, text: &str) -> bool {
        let lowered = text.to_lowercase().replace(['\u{2018}', '\u{2019}'], "'");
        self.0.iter().any(|p| lowered.contains(p.as_str()))
    }
}

impl Default for RefusalPhrases {
    fn default() -> Self {
        Self::parse(DEFAULT_REFUSALS)
    }
}

#[derive(Deserialize)]
struct RawPair {
    question: String,
    answer: String,
}

fn strip_fences(raw: &str) -> &str {
    let t = raw.trim();
    let Some(rest) = t.strip_prefix("```") else {
        return t;
    };
    let rest = rest.strip_prefix("json").unwrap_or(rest);
    rest.strip_suffix("```").unwrap_or(rest).trim()
}

fn classify(raw: &str, refusals: &RefusalPhrases) -> Result<RawPair, DropReason> {
    let pair: RawPair =
        serde_json::from_str(strip_fences(raw)).map_err(|_| DropReason::Malformed)?;
    if pair.question.trim().is_empty() || pair.answer.trim().is_empty() {
        return Err(DropReason::EmptyField);
    }
    if refusals.matches(&pair.question) || refusals.matches(&pair.answer) {
        return Err(DropReason::Refusal);
    }
    Ok(pair)
}

/// [`filter_responses_with`] using the bundled refusal list.
pub fn filter_responses(raw: Vec<(QARecord, String)>) -> FilterOutcome {
    filter_responses_with(raw, &RefusalPhrases::default())
}

/// Parses each raw model response into the paired record's question and
/// answer, dropping malformed, empty and refused ones. Surviving text has
/// `<Frame N>` markers normalized.
pub fn filter_responses_with(
    raw: Vec<(QARecord, String)>,
    refusals: &RefusalPhrases,
) -> FilterOutcome {
    let mut kept = Vec::new();
    let mut drops = DropCounts::default();
    for (mut record, text) in raw {
        match classify(&text, refusals) {
            Ok(pair) => {
                record.question = normalize_timestamps(&pair.question);
                record.answer = normalize_timestamps(&pair.answer);
                kept.push(record);
            }
            Err(reason) => drops.bump(reason),
        }
    }
    FilterOutcome { kept, drops }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::Category;

    fn skeleton() -> QARecord {
        QARecord {
            video_id: "v".into(),
            question: String::new(),
            answer: String::new(),
            category: Category::Temporal,
            frame_timestamps_s: vec![0.5],
            provenance: "mock".into(),
        }
    }

    fn raw(q: &str, a: &str) -> String {
        serde_json::json!({"question": q, "answer": a}).to_string()
    }

    #[test]
    fn well_formed_pair_is_normalized() {
        let out = filter_responses(vec![(skeleton(), raw("What at <Frame 3>?", "A cat."))]);
        assert_eq!(out.drops.total(), 0);
        assert_eq!(out.kept[0].question, "What at frame of 3s?");
        assert_eq!(out.kept[0].answer, "A cat.");
    }

    #[test]
    fn refusal_dropped() {
        let out = filter_responses(vec![(skeleton(), raw("Who?", "I'm sorry, I can't assist"))]);
        assert!(out.kept.is_empty());
        assert_eq!(out.drops.refusal, 1);
        let curly = filter_responses(vec![(skeleton(), raw("Who?", "I\u{2019}m sorry."))]);
        assert_eq!(curly.drops.refusal, 1);
    }

    #[test]
    fn empty_answer_dropped() {
        let out = filter_responses(vec![(skeleton(), raw("Q?", "  "))]);
        assert_eq!(out.drops.empty_field, 1);
    }

    #[test]
    fn malformed_dropped() {
        let out = filter_responses(vec![
            (skeleton(), "not json".into()),
            (skeleton(), r#"{"answer": "D"}"#.into()),
            (skeleton(), r#"{"question": 3, "answer": "x"}"#.into()),
            (skeleton(), "[1, 2]".into()),
        ]);
        assert_eq!(out.drops.malformed, 4);
    }

    #[test]
    fn fenced_json_accepted() {
        let text = format!("```json\n{}\n```", raw("Q?", "A."));
        assert_eq!(filter_responses(vec![(skeleton(), text)]).kept.len(), 1);
    }

    #[test]
    fn idempotent() {
        let first = filter_responses(vec![
            (skeleton(), raw("At <Frame 1>?", "Yes <Frame 2>.")),
            (skeleton(), raw("Q", "As an AI I cannot")),
        ]);
        let again = filter_responses(
            first
                .kept
                .iter()
                .map(|r| (r.clone(), raw(&r.question, &r.answer)))
                .collect(),
        );
        assert_eq!(again.kept, first.kept);
        assert_eq!(again.drops.total(), 0);
    }

    #[test]
    fn refusal_list_is_configurable() {
        let phrases = RefusalPhrases::parse("# custom\nno comment\n");
        let out = filter_responses_with(
            vec![
                (skeleton(), raw("Q", "No comment.")),
                (skeleton(), raw("Q", "I'm sorry")),
            ],
            &phrases,
        );
        assert_eq!(out.drops.refusal, 1);
        assert_eq!(out.kept.len(), 1);
    }
}
