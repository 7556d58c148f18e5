use std::collections::HashMap;

use proptest::prelude::*;
use vtok_core::pipeline::fixtures::planted_corpus;
use vtok_core::pipeline::{
    dedup_captions, downsample_by_chunk_frequency, filter_responses, run_from_config,
    CaptionRecord, Category, PipelineConfig, QARecord, Source, StopWords,
};

fn recount(records: &[CaptionRecord], stop: &StopWords) -> HashMap<String, usize> {
    let mut counts = HashMap::new();
    for r in records {
        let mut chunks = stop.chunks(&r.caption);
        chunks.sort();
        chunks.dedup();
        for c in chunks {
            *counts.entry(c).or_insert(0) += 1;
        }
    }
    counts
}

fn corpus_strategy() -> impl Strategy<Value = Vec<CaptionRecord>> {
    let word = prop_oneof![
        Just("dog"),
        Just("cat"),
        Just("park"),
        Just("red"),
        Just("the"),
        Just("a"),
        Just("in"),
        Just("runs"),
        Just(","),
        Just("river"),
    ];
    proptest::collection::vec(proptest::collection::vec(word, 1..8), 0..60).prop_map(|caps| {
        caps.into_iter()
            .enumerate()
            .map(|(i, words)| CaptionRecord {
                video_id: format!("v{i}"),
                caption: words.join(" "),
                duration_s: 5.0,
                source: Source::Webvid,
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn downsample_respects_cap(recs in corpus_strategy(), cap in 1usize..6, seed: u64) {
        let stop = StopWords::default();
        let kept = downsample_by_chunk_frequency(&recs, cap, seed, &stop);
        for (_, n) in recount(&kept, &stop) {
            prop_assert!(n <= cap);
        }
        prop_assert_eq!(&kept, &downsample_by_chunk_frequency(&recs, cap, seed, &stop));
    }

    #[test]
    fn dedup_idempotent(recs in corpus_strategy()) {
        let once = dedup_captions(&recs);
        prop_assert_eq!(dedup_captions(&once), once);
    }

    #[test]
    fn filter_idempotent(answers in proptest::collection::vec("[a-zA-Z<> 0-9']{0,30}", 0..20)) {
        let skeleton = QARecord {
            video_id: "v".into(),
            question: String::new(),
            answer: String::new(),
            category: Category::General,
            frame_timestamps_s: vec![],
            provenance: "t".into(),
        };
        let raw: Vec<(QARecord, String)> = answers
            .iter()
            .map(|a| (skeleton.clone(), serde_json::json!({"question": "Q <Frame 2>?", "answer": a}).to_string()))
            .collect();
        let first = filter_responses(raw);
        let again = filter_responses(
            first.kept.iter()
                .map(|r| (r.clone(), serde_json::json!({"question": r.question, "answer": r.answer}).to_string()))
                .collect(),
        );
        prop_assert_eq!(again.kept, first.kept);
    }
}

#[test]
fn config_driven_run_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = planted_corpus(4, 120, 12);
    let input = dir.path().join("captions.jsonl");
    let lines: String = corpus
        .records
        .iter()
        .map(|r| serde_json::to_string(r).unwrap() + "\n")
        .collect();
    std::fs::write(&input, lines).unwrap();
    std::fs::write(
        dir.path().join("run.conf"),
        "input = captions.jsonl\noutput = qa.jsonl\nseed = 3\nchunk_cap = 20\n",
    )
    .unwrap();
    let cfg = PipelineConfig::load(&dir.path().join("run.conf")).unwrap();
    let report = run_from_config(&cfg).unwrap();
    assert_eq!(report.dedup_dropped, 12);
    let out = std::fs::read_to_string(dir.path().join("qa.jsonl")).unwrap();
    assert_eq!(out.lines().count(), report.kept);
    for line in out.lines() {
        let r: QARecord = serde_json::from_str(line).unwrap();
        assert!(Category::ALL.contains(&r.category));
        assert!(!r.question.is_empty() && !r.answer.is_empty());
        assert_eq!(r.provenance, "mock");
    }
    let rep = std::fs::read_to_string(dir.path().join("qa.jsonl.report")).unwrap();
    assert!(rep.contains("dedup_dropped=12\n"));
}
