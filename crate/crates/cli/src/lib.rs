//! Subcommand handlers for the `vtok` binary.
//!
//! Every handler writes its machine-readable result to the supplied writer
//! and returns a [`CliError`] whose [`CliError::exit_code`] is 1 for domain
//! errors and 2 for usage or I/O errors.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use thiserror::Error;
use vtok_core::budget::{
    inference_tokens_per_frame, plan_budget, plan_frame_sampling, reference_preset, snap_to_grid,
    sweep_blocks, sweep_cost_table, training_token_interval, BudgetError, CostRow,
    COST_TABLE_HEADER,
};
use vtok_core::compress::{
    compress, read_scorer_file, write_scorer_file, CompressError, GumbelConfig, ScorerParams,
};
use vtok_core::pipeline::{run_from_config, PipelineConfig, PipelineError};
use vtok_core::serialize::{serialize_video_prompt, SerializeError};
use vtok_core::tensor::{
    read_feature_file, synth_video, write_compressed_file, write_feature_file, CompressedVideo,
    FormatError, GridError,
};
use vtok_core::{Compressor, Method, MIN_TOKENS_PER_FRAME};

const DEFAULT_N_MAX: [usize; 3] = [12_000, 8_000, 4_000];
const DEFAULT_TPF: [usize; 5] = [36, 64, 100, 144, 256];

#[derive(Debug, Parser)]
#[command(
    name = "vtok",
    version,
    about = "Visual-token compression and budget tools"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compress every frame of a feature file to a fixed token count
    Compress(CompressArgs),
    /// Split a visual-token budget between frames and tokens per frame
    Plan(PlanArgs),
    /// Print frame timestamps for a clip
    Sample(SampleArgs),
    /// Render the timestamped prompt layout for a clip
    Serialize(SerializeArgs),
    /// Build QA records from a caption corpus
    Pipeline(PipelineArgs),
    /// Emit the max-frames table for budgets and tokens-per-frame values
    Sweep(SweepArgs),
    /// Write a synthetic feature file (and optionally scorer weights)
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Pool,
    Merge,
    Prune,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Pool => Method::Pool,
            MethodArg::Merge => Method::Merge,
            MethodArg::Prune => Method::Prune,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Hard,
    Soft,
}

#[derive(Debug, Args)]
pub struct CompressArgs {
    /// Input feature file (VTOK)
    #[arg(short, long)]
    pub input: PathBuf,
    /// Compressor to apply
    #[arg(short, long, value_enum)]
    pub method: MethodArg,
    /// Tokens per frame after compression; pooling snaps down to a square
    #[arg(short, long)]
    pub target: usize,
    /// Output file (VCMP)
    #[arg(short, long)]
    pub output: PathBuf,
    /// Worker threads for per-frame compression
    #[arg(short, long, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
    pub jobs: u16,
    /// Fail if the total output tokens exceed this budget
    #[arg(long)]
    pub n_max: Option<usize>,
    /// Scorer weights for pruning (VSCR); random weights from --seed if absent
    #[arg(long)]
    pub scorer: Option<PathBuf>,
    /// Seed for the default scorer and Gumbel noise
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Selection mode for pruning
    #[arg(long, value_enum, default_value_t = ModeArg::Hard)]
    pub mode: ModeArg,
    /// Gumbel temperature for soft pruning
    #[arg(long, default_value_t = 1.0)]
    pub tau: f64,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    /// Visual-token budget
    #[arg(long)]
    pub n_max: usize,
    /// Number of frames to fit
    #[arg(long)]
    pub frames: usize,
    /// Snap tokens per frame down to a square pooling grid
    #[arg(long)]
    pub pooled: bool,
    /// Pick tokens per frame from a sweep CSV instead of the formula
    #[arg(long)]
    pub table: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    /// Clip duration in seconds
    #[arg(long)]
    pub duration: f64,
    /// Frame cap
    #[arg(long)]
    pub max_frames: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LayoutFormat {
    Text,
    Skeleton,
    Json,
}

#[derive(Debug, Args)]
pub struct SerializeArgs {
    /// Clip duration in seconds
    #[arg(long)]
    pub duration: f64,
    /// Frame cap
    #[arg(long)]
    pub max_frames: usize,
    /// Tokens per image slot; derived from --n-max when absent
    #[arg(long)]
    pub tokens_per_frame: Option<usize>,
    /// Visual-token budget the layout must fit
    #[arg(long)]
    pub n_max: Option<usize>,
    /// Instruction placed after the frames
    #[arg(long, default_value = "")]
    pub instruction: String,
    /// Output rendering
    #[arg(long, value_enum, default_value_t = LayoutFormat::Text)]
    pub format: LayoutFormat,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// Key=value config file
    #[arg(short, long)]
    pub config: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Comma-separated budgets
    #[arg(long, value_delimiter = ',')]
    pub n_max: Vec<usize>,
    /// Comma-separated tokens-per-frame values
    #[arg(long, value_delimiter = ',')]
    pub tpf: Vec<usize>,
    /// CSV destination; stdout if absent
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Frame count
    #[arg(long, default_value_t = 120)]
    pub frames: usize,
    /// Grid rows per frame
    #[arg(long, default_value_t = 24)]
    pub height: usize,
    /// Grid columns per frame
    #[arg(long, default_value_t = 24)]
    pub width: usize,
    /// Channels per token
    #[arg(long, default_value_t = 64)]
    pub channels: usize,
    /// Generator seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Feature file destination
    #[arg(short, long)]
    pub output: PathBuf,
    /// Also write random scorer weights for the channel count
    #[arg(long)]
    pub scorer_output: Option<PathBuf>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Format { path: String, source: FormatError },
    #[error(transparent)]
    Compress(#[from] CompressError),
    #[error(transparent)]
    Budget(#[from] BudgetError),
    #[error(transparent)]
    Serialize(#[from] SerializeError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("{0}")]
    Domain(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Usage(_) | Self::Io { .. } => 2,
            Self::Format {
                source: FormatError::Io(_),
                ..
            } => 2,
            Self::Pipeline(PipelineError::Io { .. } | PipelineError::Config(_)) => 2,
            _ => 1,
        }
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }

    fn format(path: &Path, source: FormatError) -> Self {
        Self::Format {
            path: path.display().to_string(),
            source,
        }
    }
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Compress(a) => cmd_compress(&a, out),
        Command::Plan(a) => cmd_plan(&a, out),
        Command::Sample(a) => cmd_sample(&a, out),
        Command::Serialize(a) => cmd_serialize(&a, out),
        Command::Pipeline(a) => cmd_pipeline(&a, out),
        Command::Sweep(a) => cmd_sweep(&a, out),
        Command::Synth(a) => cmd_synth(&a, out),
    }
}

fn emit(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes())
        .map_err(|e| CliError::io(Path::new("<stdout>"), e))
}

/// Shortest decimal with at least one fractional digit: `5.76`, `1.0`.
pub fn format_ratio(ratio: f64) -> String {
    let s = format!("{ratio:.4}");
    let s = s.trim_end_matches('0');
    if s.ends_with('.') {
        format!("{s}0")
    } else {
        s.to_string()
    }
}

pub fn cmd_compress(args: &CompressArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let video = read_feature_file(&args.input).map_err(|e| CliError::format(&args.input, e))?;
    let (h, w, c) = video.frame_shape();
    let n = h * w;
    let method = Method::from(args.method);
    let target = match method {
        Method::Pool => snap_to_grid(args.target.min(h.min(w).pow(2)))?.token_count(),
        Method::Prune if !(MIN_TOKENS_PER_FRAME..=n).contains(&args.target) => {
            return Err(CliError::Domain(format!(
                "prune target {} outside [{MIN_TOKENS_PER_FRAME}, {n}]",
                args.target
            )))
        }
        _ => args.target,
    };
    let scorer = match (method, &args.scorer) {
        (Method::Prune, Some(p)) => Some(read_scorer_file(p).map_err(|e| CliError::format(p, e))?),
        (Method::Prune, None) => Some(ScorerParams::random(args.seed, c)),
        _ => None,
    };
    let build = |frame: usize| -> Result<Compressor, CliError> {
        Ok(match method {
            Method::Pool => Compressor::Pool,
            Method::Merge => Compressor::Merge,
            Method::Prune => {
                let cfg = match args.mode {
                    ModeArg::Hard => GumbelConfig::hard(),
                    ModeArg::Soft => {
                        GumbelConfig::soft(args.tau, args.seed.wrapping_add(frame as u64))
                    }
                };
                Compressor::Prune {
                    params: scorer.clone().expect("scorer loaded for prune"),
                    cfg,
                }
            }
        })
    };
    if method == Method::Prune
        && args.mode == ModeArg::Soft
        && !(args.tau.is_finite() && args.tau > 0.0)
    {
        return Err(CompressError::InvalidTemperature(args.tau).into());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs as usize)
        .build()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let frames = pool.install(|| {
        video
            .frames()
            .par_iter()
            .enumerate()
            .map(|(i, g)| Ok(compress(g, &build(i)?, target)?))
            .collect::<Result<Vec<_>, CliError>>()
    })?;
    let result = CompressedVideo {
        method,
        source_tokens: n,
        timestamps_s: video.timestamps_s().to_vec(),
        frames,
    };
    let input_tokens = n * video.len();
    let output_tokens = result.total_tokens();
    if let Some(n_max) = args.n_max {
        if output_tokens > n_max {
            return Err(CliError::Domain(format!(
                "{output_tokens} output tokens exceed budget {n_max}"
            )));
        }
    }
    write_compressed_file(&result, &args.output).map_err(|e| CliError::format(&args.output, e))?;
    emit(
        out,
        &format!(
            "method={method} frames={} input_tokens={input_tokens} output_tokens={output_tokens} ratio={}\n",
            video.len(),
            format_ratio(input_tokens as f64 / output_tokens as f64)
        ),
    )
}

/// Rows of a sweep CSV, header checked.
pub fn read_cost_table(path: &Path) -> Result<Vec<CostRow>, CliError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?;
    if header.iter().collect::<Vec<_>>().join(",") != COST_TABLE_HEADER {
        return Err(CliError::Domain(format!(
            "{}: expected header {COST_TABLE_HEADER}",
            path.display()
        )));
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let field = |i: usize| -> Result<usize, CliError> {
            rec[i].trim().parse().map_err(|_| {
                CliError::Domain(format!("{}: bad number {:?}", path.display(), &rec[i]))
            })
        };
        rows.push(CostRow {
            tokens_per_frame: field(0)?,
            n_max: field(1)?,
            max_frames: field(2)?,
        });
    }
    Ok(rows)
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => CliError::io(path, io),
            _ => unreachable!(),
        }
    } else {
        CliError::Domain(format!("{}: {e}", path.display()))
    }
}

pub fn cmd_plan(args: &PlanArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let (tpf, frames, source) = match &args.table {
        Some(path) => {
            let row = read_cost_table(path)?
                .into_iter()
                .filter(|r| r.n_max == args.n_max && r.max_frames >= args.frames)
                .max_by_key(|r| r.tokens_per_frame)
                .ok_or_else(|| {
                    CliError::Domain(format!(
                        "no row in {} fits {} frames at n_max {}",
                        path.display(),
                        args.frames,
                        args.n_max
                    ))
                })?;
            (row.tokens_per_frame, args.frames, "table")
        }
        None => {
            let plan = plan_budget(args.n_max, args.frames, args.pooled)?;
            (plan.tokens_per_frame(), plan.frame_count(), "formula")
        }
    };
    let tpf = if args.pooled {
        snap_to_grid(tpf)?.token_count()
    } else {
        tpf
    };
    let mut text = format!(
        "source={source} n_max={} frame_count={frames} tokens_per_frame={tpf} total_tokens={}",
        args.n_max,
        frames * tpf
    );
    if args.pooled {
        let side = snap_to_grid(tpf)?.side();
        text.push_str(&format!(" shape={side}x{side}"));
    }
    if let Ok((lo, hi)) = training_token_interval(args.n_max, frames) {
        text.push_str(&format!(" train_lo={lo} train_hi={hi}"));
    }
    text.push('\n');
    emit(out, &text)
}

fn join_f64(values: &[f64]) -> String {
    values
        .iter()
        .map(f64::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

pub fn cmd_sample(args: &SampleArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let plan = plan_frame_sampling(args.duration, args.max_frames)?;
    emit(
        out,
        &format!(
            "frames={} timestamps_s={}\n",
            plan.len(),
            join_f64(plan.timestamps_s())
        ),
    )
}

pub fn cmd_serialize(args: &SerializeArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let plan = plan_frame_sampling(args.duration, args.max_frames)?;
    let tpf = match (args.tokens_per_frame, args.n_max) {
        (Some(t), _) => t,
        (None, Some(n_max)) => inference_tokens_per_frame(n_max, plan.len()),
        (None, None) => {
            return Err(CliError::Usage(
                "one of --tokens-per-frame or --n-max is required".into(),
            ))
        }
    };
    let layout = serialize_video_prompt(&plan, tpf, &args.instruction)?;
    if let Some(n_max) = args.n_max {
        layout.check_budget(n_max)?;
    }
    let text = match args.format {
        LayoutFormat::Text => layout.render(),
        LayoutFormat::Skeleton => layout.render_skeleton(),
        LayoutFormat::Json => layout.to_json(),
    };
    emit(out, &format!("{text}\n"))
}

pub fn cmd_pipeline(args: &PipelineArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = PipelineConfig::load(&args.config)?;
    let report = run_from_config(&cfg)?;
    emit(out, &report.to_kv())
}

pub fn cmd_sweep(args: &SweepArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if args.n_max.contains(&0) || args.tpf.contains(&0) {
        return Err(CliError::Usage("sweep values must be positive".into()));
    }
    let rows = match (args.n_max.is_empty(), args.tpf.is_empty()) {
        (true, true) => sweep_blocks(&reference_preset()),
        (false, true) => sweep_cost_table(&args.n_max, &DEFAULT_TPF),
        (true, false) => sweep_cost_table(&DEFAULT_N_MAX, &args.tpf),
        (false, false) => sweep_cost_table(&args.n_max, &args.tpf),
    };
    let csv = vtok_core::budget::cost_csv_string(&rows);
    match &args.output {
        Some(path) => write_text_atomic(path, &csv),
        None => emit(out, &csv),
    }
}

pub fn cmd_synth(args: &SynthArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let video = synth_video(
        args.seed,
        args.frames,
        args.height,
        args.width,
        args.channels,
    )?;
    write_feature_file(&video, &args.output).map_err(|e| CliError::format(&args.output, e))?;
    if let Some(p) = &args.scorer_output {
        write_scorer_file(&ScorerParams::random(args.seed, args.channels), p)
            .map_err(|e| CliError::format(p, e))?;
    }
    emit(
        out,
        &format!(
            "frames={} height={} width={} channels={}\n",
            args.frames, args.height, args.width, args.channels
        ),
    )
}

fn write_text_atomic(path: &Path, text: &str) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(path, e))?;
    tmp.write_all(text.as_bytes())
        .map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}
