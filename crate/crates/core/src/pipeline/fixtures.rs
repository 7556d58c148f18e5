//! Synthetic caption corpora with planted duplicates and skewed chunk
//! frequencies, for tests and demos.

use super::{normalize_caption, CaptionRecord, Source};
use crate::rng::Rng64;
use std::collections::HashSet;

const ADJECTIVES: &[&str] = &[
    "red", "small", "old", "happy", "wet", "tall", "young", "black", "shiny", "tired",
];
const NOUNS: &[&str] = &[
    "dog", "man", "woman", "car", "cat", "bird", "child", "horse", "boat", "chef", "train",
    "cyclist",
];
const VERBS: &[&str] = &[
    "runs", "walks", "jumps", "waits", "plays", "drives", "sits", "turns",
];
const PLACES: &[&str] = &[
    "park", "beach", "street", "kitchen", "forest", "river", "stadium", "market", "bridge",
    "garden", "station", "harbor",
];
const TIMES: &[&str] = &["morning", "noon", "dusk", "night", "sunrise"];

/// A corpus plus the ids of the records that duplicate an earlier caption.
#[derive(Debug, Clone)]
pub struct PlantedCorpus {
    pub records: Vec<CaptionRecord>,
    pub duplicate_ids: Vec<String>,
}

/// Cubing a uniform draw skews the pick toward the front of the list.
fn skewed<'a>(rng: &mut Rng64, items: &[&'a str]) -> &'a str {
    let u = rng.next_f64();
    items[((u * u * u) * items.len() as f64) as usize]
}

/// `originals` distinct captions plus `duplicates` case, spacing and
/// punctuation variants of earlier captions, each placed after its source.
pub fn planted_corpus(seed: u64, originals: usize, duplicates: usize) -> PlantedCorpus {
    assert!(
        duplicates <= originals,
        "each duplicate needs its own original"
    );
    let mut rng = Rng64::new(seed);
    let mut seen = HashSet::new();
    let mut records = Vec::with_capacity(originals + duplicates);
    let mut take = 0u64;
    while records.len() < originals {
        take += 1;
        let caption = format!(
            "a {} {} {} near the {} at {}, take {}",
            ADJECTIVES[rng.next_below(ADJECTIVES.len() as u64) as usize],
            skewed(&mut rng, NOUNS),
            VERBS[rng.next_below(VERBS.len() as u64) as usize],
            skewed(&mut rng, PLACES),
            TIMES[rng.next_below(TIMES.len() as u64) as usize],
            take,
        );
        if !seen.insert(normalize_caption(&caption)) {
            continue;
        }
        let source = match rng.next_below(3) {
            0 => Source::Webvid,
            1 => Source::Internvid,
            _ => Source::Hdvila,
        };
        records.push(CaptionRecord {
            video_id: format!("vid{:05}", records.len()),
            caption,
            duration_s: 2.0 + (rng.next_f64() * 598.0 * 10.0).round() / 10.0,
            source,
        });
    }

    let mut sources: Vec<usize> = (0..originals).collect();
    rng.shuffle(&mut sources);
    let mut duplicate_ids = Vec::with_capacity(duplicates);
    for (n, &src) in sources.iter().take(duplicates).enumerate() {
        let original = &records
            .iter()
            .find(|r| r.video_id == format!("vid{src:05}"))
            .unwrap()
            .clone();
        let variant = match n % 3 {
            0 => original.caption.to_uppercase(),
            1 => original.caption.replace(' ', "  ") + ".",
            _ => format!("{}!", original.caption.replace(", ", " ; ")),
        };
        let id = format!("dup{n:05}");
        let pos = records
            .iter()
            .position(|r| r.video_id == original.video_id)
            .unwrap();
        let insert_at = pos + 1 + rng.next_below((records.len() - pos) as u64) as usize;
        records.insert(
            insert_at,
            CaptionRecord {
                video_id: id.clone(),
                caption: variant,
                ..original.clone()
            },
        );
        duplicate_ids.push(id);
    }
    PlantedCorpus {
        records,
        duplicate_ids,
    }
}
