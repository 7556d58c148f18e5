//! End-to-end pipeline driver.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use super::{
    build_annotation_request, dedup_captions, downsample_by_chunk_frequency, filter_responses_with,
    fnv1a, frame_plan_for, AnnotationClient, AnnotationRequest, CaptionRecord, Category,
    ClientError, ClientMode, DropCounts, HttpClient, MockClient, PipelineConfig, PipelineError,
    QARecord, RefusalPhrases, StopWords, Templates,
};
use crate::rng::Rng64;
use crate::serialize::format_multichoice;

/// Configurable text assets used by the pipeline.
#[derive(Debug, Clone, Default)]
pub struct Assets {
    pub stopwords: StopWords,
    pub templates: Templates,
    pub refusals: RefusalPhrases,
}

impl Assets {
    /// Bundled assets, replaced by any file the config points at.
    pub fn from_config(cfg: &PipelineConfig) -> Result<Self, PipelineError> {
        let read =
            |p: &Path| std::fs::read_to_string(p).map_err(|e| PipelineError::io(p.display(), e));
        let mut assets = Self::default();
        if let Some(p) = &cfg.stopwords {
            assets.stopwords = StopWords::parse(&read(p)?);
        }
        if let Some(p) = &cfg.refusals {
            assets.refusals = RefusalPhrases::parse(&read(p)?);
        }
        if let Some(dir) = &cfg.templates_dir {
            assets.templates = Templates::load_dir(dir)?;
        }
        Ok(assets)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineOptions {
    pub seed: u64,
    pub chunk_cap: usize,
    pub long_video_fraction: f64,
    pub max_in_flight: usize,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            chunk_cap: 100,
            long_video_fraction: 0.05,
            max_in_flight: 4,
        }
    }
}

/// Per-stage counts.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PipelineReport {
    pub input: usize,
    pub dedup_dropped: usize,
    pub downsample_dropped: usize,
    pub requests: usize,
    pub send_failed: usize,
    pub drops: DropCounts,
    pub kept: usize,
    pub per_category: BTreeMap<Category, usize>,
}

impl PipelineReport {
    /// One `key=value` pair per line, fixed order.
    pub fn to_kv(&self) -> String {
        let mut lines = vec![
            format!("input={}", self.input),
            format!("dedup_dropped={}", self.dedup_dropped),
            format!("downsample_dropped={}", self.downsample_dropped),
            format!("requests={}", self.requests),
            format!("send_failed={}", self.send_failed),
            format!("dropped_malformed={}", self.drops.malformed),
            format!("dropped_refusal={}", self.drops.refusal),
            format!("dropped_empty={}", self.drops.empty_field),
            format!("kept={}", self.kept),
        ];
        for c in Category::ALL {
            lines.push(format!(
                "kept_{c}={}",
                self.per_category.get(&c).copied().unwrap_or(0)
            ));
        }
        lines.join("\n") + "\n"
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub records: Vec<QARecord>,
    pub report: PipelineReport,
}

impl PipelineOutput {
    pub fn to_jsonl(&self) -> String {
        self.records
            .iter()
            .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
            .collect()
    }
}

/// dedup → downsample → request build → send → filter.
///
/// Each surviving caption gets one request; its category and mock seed come
/// from a generator seeded by `opts.seed` and the video id, so output is
/// independent of scheduling. Formatting-task questions get the
/// single-letter answer suffix.
pub fn run_pipeline(
    records: &[CaptionRecord],
    opts: &PipelineOptions,
    client: &dyn AnnotationClient,
    assets: &Assets,
) -> Result<PipelineOutput, PipelineError> {
    let mut report = PipelineReport {
        input: records.len(),
        ..Default::default()
    };
    let deduped = dedup_captions(records);
    report.dedup_dropped = records.len() - deduped.len();
    let sampled =
        downsample_by_chunk_frequency(&deduped, opts.chunk_cap, opts.seed, &assets.stopwords);
    report.downsample_dropped = deduped.len() - sampled.len();

    let requests = sampled
        .iter()
        .map(|record| {
            let mut rng = Rng64::new(opts.seed ^ fnv1a(&record.video_id));
            let category = Category::ALL[rng.next_below(Category::ALL.len() as u64) as usize];
            let plan = frame_plan_for(record, opts.seed, opts.long_video_fraction)?;
            let mut req = build_annotation_request(record, category, &plan, &assets.templates)?;
            req.seed = rng.next_u64();
            Ok(req)
        })
        .collect::<Result<Vec<_>, PipelineError>>()?;
    report.requests = requests.len();

    let replies = send_all(client, &requests, opts.max_in_flight);
    let provenance = client.provenance();
    let mut pending = Vec::with_capacity(requests.len());
    for (req, reply) in requests.iter().zip(replies) {
        match reply {
            Ok(text) => pending.push((
                QARecord {
                    video_id: req.video_id.clone(),
                    question: String::new(),
                    answer: String::new(),
                    category: req.category,
                    frame_timestamps_s: req.frames.iter().map(|f| f.timestamp_s).collect(),
                    provenance: provenance.clone(),
                },
                text,
            )),
            Err(_) => report.send_failed += 1,
        }
    }

    let outcome = filter_responses_with(pending, &assets.refusals);
    report.drops = outcome.drops;
    let mut kept = outcome.kept;
    for r in &mut kept {
        if r.category == Category::Formatting {
            r.question = format_multichoice(&r.question);
        }
        *report.per_category.entry(r.category).or_default() += 1;
    }
    report.kept = kept.len();
    Ok(PipelineOutput {
        records: kept,
        report,
    })
}

/// Sends every request with at most `max_in_flight` outstanding; results
/// keep request order.
fn send_all(
    client: &dyn AnnotationClient,
    requests: &[AnnotationRequest],
    max_in_flight: usize,
) -> Vec<Result<String, ClientError>> {
    let slots: Vec<Mutex<Option<Result<String, ClientError>>>> =
        requests.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = max_in_flight.max(1).min(requests.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(req) = requests.get(i) else { break };
                let reply = client.send(req);
                *slots[i].lock().expect("slot lock") = Some(reply);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| {
            m.into_inner()
                .expect("slot lock")
                .expect("every slot filled")
        })
        .collect()
}

/// Reads captions from `.csv` (header `video_id,caption,duration_s,source`)
/// or JSON lines (any other extension).
pub fn read_captions(path: &Path) -> Result<Vec<CaptionRecord>, PipelineError> {
    let is_csv = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let records: Vec<CaptionRecord> = if is_csv {
        let mut reader = csv::Reader::from_path(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        reader
            .deserialize()
            .enumerate()
            .map(|(i, r)| {
                r.map_err(|e| PipelineError::InvalidRecord {
                    line: i + 2,
                    reason: e.to_string(),
                })
            })
            .collect::<Result<_, _>>()?
    } else {
        let text =
            std::fs::read_to_string(path).map_err(|e| PipelineError::io(path.display(), e))?;
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| PipelineError::InvalidRecord {
                    line: i + 1,
                    reason: e.to_string(),
                })
            })
            .collect::<Result<_, _>>()?
    };
    for (i, r) in records.iter().enumerate() {
        r.validate()
            .map_err(|reason| PipelineError::InvalidRecord {
                line: i + 1 + usize::from(is_csv),
                reason,
            })?;
    }
    Ok(records)
}

fn write_text_atomic(path: &Path, text: &str) -> Result<(), PipelineError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let io = |e| PipelineError::io(path.display(), e);
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(text.as_bytes()).map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

pub fn write_jsonl(records: &[QARecord], path: &Path) -> Result<(), PipelineError> {
    let text: String = records
        .iter()
        .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
        .collect();
    write_text_atomic(path, &text)
}

/// Runs the pipeline described by `cfg`, writing the JSONL output and the
/// `key=value` report.
pub fn run_from_config(cfg: &PipelineConfig) -> Result<PipelineReport, PipelineError> {
    let records = read_captions(&cfg.input)?;
    let assets = Assets::from_config(cfg)?;
    let client: Box<dyn AnnotationClient> = match cfg.client {
        ClientMode::Mock => Box::new(MockClient::new()),
        ClientMode::Live => Box::new(HttpClient::new(cfg.http.clone())?),
    };
    let opts = PipelineOptions {
        seed: cfg.seed,
        chunk_cap: cfg.chunk_cap,
        long_video_fraction: cfg.long_video_fraction,
        max_in_flight: cfg.max_in_flight,
    };
    let out = run_pipeline(&records, &opts, client.as_ref(), &assets)?;
    write_text_atomic(&cfg.output, &out.to_jsonl())?;
    write_text_atomic(&cfg.report, &out.report.to_kv())?;
    Ok(out.report)
}
