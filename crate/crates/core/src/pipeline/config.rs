//! Flat `key = value` configuration with `VTOK_` environment overrides.
//!
//! ```text
//! # comment
//! input = captions.csv
//! output = qa.jsonl
//! seed = 7
//! ```
//!
//! Every key may be overridden by an environment variable named `VTOK_`
//! followed by the upper-cased key, e.g. `VTOK_API_TOKEN`. Relative paths
//! resolve against the config file's directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use super::{HttpClientConfig, PipelineError, RetryPolicy};

pub const ENV_PREFIX: &str = "VTOK_";

const KEYS: &[&str] = &[
    "input",
    "output",
    "report",
    "seed",
    "chunk_cap",
    "long_video_fraction",
    "client",
    "endpoint",
    "api_token",
    "model",
    "temperature",
    "timeout_ms",
    "max_retries",
    "backoff_ms",
    "max_in_flight",
    "stopwords",
    "refusals",
    "templates_dir",
];

/// Parses `key = value` lines. Blank lines and `#` comments are skipped.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>, PipelineError> {
    let mut map = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            PipelineError::Config(format!("line {}: expected key = value", n + 1))
        })?;
        let key = key.trim().to_string();
        if key.is_empty() {
            return Err(PipelineError::Config(format!("line {}: empty key", n + 1)));
        }
        if map.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(PipelineError::Config(format!(
                "line {}: duplicate key {key}",
                n + 1
            )));
        }
    }
    Ok(map)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClientMode {
    Mock,
    Live,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub input: PathBuf,
    pub output: PathBuf,
    pub report: PathBuf,
    pub seed: u64,
    pub chunk_cap: usize,
    pub long_video_fraction: f64,
    pub client: ClientMode,
    pub http: HttpClientConfig,
    pub max_in_flight: usize,
    pub stopwords: Option<PathBuf>,
    pub refusals: Option<PathBuf>,
    pub templates_dir: Option<PathBuf>,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| PipelineError::io(path.display(), e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base, |k| std::env::var(k).ok())
    }

    /// Parses config text; `env` looks up override variables.
    pub fn parse(
        text: &str,
        base_dir: &Path,
        env: impl Fn(&str) -> Option<String>,
    ) -> Result<Self, PipelineError> {
        let mut kv = parse_kv(text)?;
        if let Some(bad) = kv.keys().find(|k| !KEYS.contains(&k.as_str())) {
            return Err(PipelineError::Config(format!("unknown key {bad:?}")));
        }
        for key in KEYS {
            if let Some(v) = env(&format!("{ENV_PREFIX}{}", key.to_ascii_uppercase())) {
                kv.insert(key.to_string(), v);
            }
        }
        let path = |key: &str| -> Option<PathBuf> {
            kv.get(key).filter(|v| !v.is_empty()).map(|v| {
                let p = PathBuf::from(v);
                if p.is_absolute() {
                    p
                } else {
                    base_dir.join(p)
                }
            })
        };
        let input =
            path("input").ok_or_else(|| PipelineError::Config("input is required".into()))?;
        let output =
            path("output").ok_or_else(|| PipelineError::Config("output is required".into()))?;
        let report = path("report").unwrap_or_else(|| {
            let mut name = output.as_os_str().to_owned();
            name.push(".report");
            PathBuf::from(name)
        });
        let client = match kv.get("client").map(String::as_str).unwrap_or("mock") {
            "mock" => ClientMode::Mock,
            "live" => ClientMode::Live,
            other => {
                return Err(PipelineError::Config(format!(
                    "client must be mock or live, got {other:?}"
                )))
            }
        };
        let long_video_fraction: f64 = num(&kv, "long_video_fraction", 0.05)?;
        if !(0.0..=1.0).contains(&long_video_fraction) {
            return Err(PipelineError::Config(
                "long_video_fraction must be in [0, 1]".into(),
            ));
        }
        let max_in_flight: usize = num(&kv, "max_in_flight", 4)?;
        if max_in_flight == 0 {
            return Err(PipelineError::Config(
                "max_in_flight must be at least 1".into(),
            ));
        }
        let http = HttpClientConfig {
            endpoint: kv.get("endpoint").cloned().unwrap_or_default(),
            api_token: kv.get("api_token").filter(|t| !t.is_empty()).cloned(),
            model: kv.get("model").cloned().unwrap_or_else(|| "gpt-4o".into()),
            temperature: num(&kv, "temperature", 0.2)?,
            timeout: Duration::from_millis(num(&kv, "timeout_ms", 30_000)?),
            retry: RetryPolicy {
                max_retries: num(&kv, "max_retries", 3)?,
                initial_backoff: Duration::from_millis(num(&kv, "backoff_ms", 500)?),
                ..RetryPolicy::default()
            },
        };
        if client == ClientMode::Live && http.endpoint.is_empty() {
            return Err(PipelineError::Config(
                "live client needs an endpoint".into(),
            ));
        }
        Ok(Self {
            input,
            output,
            report,
            seed: num(&kv, "seed", 0)?,
            chunk_cap: num(&kv, "chunk_cap", 100)?,
            long_video_fraction,
            client,
            http,
            max_in_flight,
            stopwords: path("stopwords"),
            refusals: path("refusals"),
            templates_dir: path("templates_dir"),
        })
    }
}

fn num<T: std::str::FromStr>(
    kv: &BTreeMap<String, String>,
    key: &str,
    default: T,
) -> Result<T, PipelineError> {
    match kv.get(key) {
        None => Ok(default),
        Some(v) => v
            .parse()
            .map_err(|_| PipelineError::Config(format!("{key}: cannot parse {v:?}"))),
    }
}
