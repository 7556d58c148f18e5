//! Caption normalization, dedup and noun-chunk balancing.

use std::collections::{BTreeMap, HashMap, HashSet};

use super::{CaptionRecord, ChunkStats};
use crate::rng::Rng64;

const DEFAULT_STOPWORDS: &str = include_str!("../../assets/stopwords.txt");

/// Lowercase, punctuation removed, whitespace collapsed.
pub fn normalize_caption(caption: &str) -> String {
    let stripped: String = caption
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .flat_map(char::to_lowercase)
        .collect();
    stripped.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Drops records whose normalized caption was already seen. Order is kept.
pub fn dedup_captions(records: &[CaptionRecord]) -> Vec<CaptionRecord> {
    let mut seen = HashSet::new();
    records
        .iter()
        .filter(|r| seen.insert(normalize_caption(&r.caption)))
        .cloned()
        .collect()
}

/// Words that break noun chunks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StopWords(HashSet<String>);

impl StopWords {
    /// Parses one word per line; `#` starts a comment.
    pub fn parse(text: &str) -> Self {
        Self(
            text.lines()
                .map(|l| l.split('#').next().unwrap_or("").trim().to_lowercase())
                .filter(|l| !l.is_empty())
                .collect(),
        )
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.contains(word)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Maximal runs of non-stop words, lowercased. Punctuation ends a run.
    pub fn chunks(&self, caption: &str) -> Vec<String> {
        let mut chunks = Vec::new();
        let mut current: Vec<String> = Vec::new();
        let mut word = String::new();
        let flush_word =
            |word: &mut String, current: &mut Vec<String>, chunks: &mut Vec<String>| {
                if word.is_empty() {
                    return;
                }
                let w = std::mem::take(word);
                if self.contains(&w) {
                    if !current.is_empty() {
                        chunks.push(current.join(" "));
                        current.clear();
                    }
                } else {
                    current.push(w);
                }
            };
        for ch in caption.chars() {
            if ch.is_alphanumeric() || ch == '\'' {
                word.extend(ch.to_lowercase());
            } else {
                flush_word(&mut word, &mut current, &mut chunks);
                if !ch.is_whitespace() && !current.is_empty() {
                    chunks.push(current.join(" "));
                    current.clear();
                }
            }
        }
        flush_word(&mut word, &mut current, &mut chunks);
        if !current.is_empty() {
            chunks.push(current.join(" "));
        }
        chunks
    }
}

impl Default for StopWords {
    fn default() -> Self {
        Self::parse(DEFAULT_STOPWORDS)
    }
}

/// Noun chunks of `caption` under the bundled stop-word list.
pub fn extract_noun_chunks(caption: &str) -> Vec<String> {
    thread_local! {
        static STOP: StopWords = StopWords::default();
    }
    STOP.with(|s| s.chunks(caption))
}

/// Number of records each chunk occurs in, most frequent first.
pub fn chunk_frequencies(records: &[CaptionRecord], stop: &StopWords) -> Vec<ChunkStats> {
    let mut freq: BTreeMap<String, usize> = BTreeMap::new();
    for r in records {
        let distinct: HashSet<String> = stop.chunks(&r.caption).into_iter().collect();
        for chunk in distinct {
            *freq.entry(chunk).or_default() += 1;
        }
    }
    let mut stats: Vec<ChunkStats> = freq
        .into_iter()
        .map(|(chunk, frequency)| ChunkStats { chunk, frequency })
        .collect();
    stats.sort_by(|a, b| b.frequency.cmp(&a.frequency).then(a.chunk.cmp(&b.chunk)));
    stats
}

/// Greedy chunk-frequency cap.
///
/// Records are visited in an order shuffled by `seed`; a record is kept only
/// if none of its chunks already appears in `cap` kept records. Kept records
/// are returned in input order. Records without chunks are always kept.
pub fn downsample_by_chunk_frequency(
    records: &[CaptionRecord],
    cap: usize,
    seed: u64,
    stop: &StopWords,
) -> Vec<CaptionRecord> {
    let mut order: Vec<usize> = (0..records.len()).collect();
    Rng64::new(seed).shuffle(&mut order);
    let mut counts: HashMap<String, usize> = HashMap::new();
    let mut keep = vec![false; records.len()];
    for i in order {
        let mut chunks = stop.chunks(&records[i].caption);
        chunks.sort();
        chunks.dedup();
        if chunks
            .iter()
            .all(|c| counts.get(c).copied().unwrap_or(0) < cap)
        {
            for c in chunks {
                *counts.entry(c).or_default() += 1;
            }
            keep[i] = true;
        }
    }
    records
        .iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|(r, _)| r.clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::Source;

    fn rec(id: &str, caption: &str) -> CaptionRecord {
        CaptionRecord {
            video_id: id.into(),
            caption: caption.into(),
            duration_s: 10.0,
            source: Source::Webvid,
        }
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize_caption("A dog  runs."), "a dog runs");
        assert_eq!(normalize_caption("  Hello,\tWORLD!! "), "hello world");
    }

    #[test]
    fn dedup_keeps_first() {
        let out = dedup_captions(&[rec("1", "a dog runs"), rec("2", "A dog  runs.")]);
        assert_eq!(out, vec![rec("1", "a dog runs")]);
        let distinct = vec![rec("1", "x"), rec("2", "y")];
        assert_eq!(dedup_captions(&distinct), distinct);
        assert!(dedup_captions(&[]).is_empty());
        assert_eq!(dedup_captions(&dedup_captions(&distinct)), distinct);
    }

    #[test]
    fn chunk_examples() {
        assert_eq!(
            extract_noun_chunks("a dog runs in the park"),
            vec!["dog runs", "park"]
        );
        assert!(extract_noun_chunks("").is_empty());
        assert!(extract_noun_chunks("the the the").is_empty());
        assert_eq!(
            extract_noun_chunks("A red car, a blue bus."),
            vec!["red car", "blue bus"]
        );
        assert_eq!(extract_noun_chunks("The dog's ball"), vec!["dog's ball"]);
    }

    #[test]
    fn stopword_list_is_versioned() {
        assert!(DEFAULT_STOPWORDS.starts_with("# vtok stop-word list, version 1"));
        assert!(StopWords::default().contains("the"));
        assert!(!StopWords::default().contains("dog"));
    }

    #[test]
    fn cap_binds() {
        let stop = StopWords::default();
        let recs: Vec<_> = (0..10).map(|i| rec(&i.to_string(), "dog")).collect();
        assert_eq!(downsample_by_chunk_frequency(&recs, 3, 1, &stop).len(), 3);
        assert_eq!(downsample_by_chunk_frequency(&recs, 10, 1, &stop).len(), 10);
        assert_eq!(
            downsample_by_chunk_frequency(&recs, 3, 5, &stop),
            downsample_by_chunk_frequency(&recs, 3, 5, &stop)
        );
    }

    #[test]
    fn chunk_free_records_survive() {
        let stop = StopWords::default();
        let recs = vec![rec("1", "the"), rec("2", "dog"), rec("3", "dog")];
        let kept = downsample_by_chunk_frequency(&recs, 1, 0, &stop);
        assert_eq!(kept.len(), 2);
        assert_eq!(kept[0].video_id, "1");
    }

    #[test]
    fn frequencies_sorted() {
        let stop = StopWords::default();
        let recs = vec![
            rec("1", "dog and cat"),
            rec("2", "dog"),
            rec("3", "the dog, the dog"),
        ];
        let f = chunk_frequencies(&recs, &stop);
        assert_eq!(
            f[0],
            ChunkStats {
                chunk: "dog".into(),
                frequency: 3
            }
        );
        assert_eq!(
            f[1],
            ChunkStats {
                chunk: "cat".into(),
                frequency: 1
            }
        );
    }
}
