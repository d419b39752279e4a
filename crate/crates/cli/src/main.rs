mod codec;
mod curate;
mod io;
mod selfcheck;
mod toy;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};
use lap_core::curation::{IdleConfig, IngestOptions, PipelineConfig, SampleConfig};
use lap_core::geometry::Frame;
use lap_core::maskgen::{build_mask, check_mask, MaskReport, TokenLayout};
use lap_core::FORMAT_VERSION;

/// Language-action pipeline: dataset curation, codec, attention masks and a
/// toy training check.
#[derive(Parser, Debug)]
#[command(name = "lap", version)]
struct Cli {
    /// Fail unless this build reads and writes the given format version.
    #[arg(long, global = true, value_name = "N")]
    format_version: Option<u32>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compute normalization statistics over a trajectory corpus.
    Stats {
        #[command(flatten)]
        io: IoArgs,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
    /// Turn trajectories into prompt / language-action / chunk samples.
    Curate {
        #[command(flatten)]
        io: IoArgs,
        #[command(flatten)]
        pipeline: PipelineArgs,
        /// Precomputed stats file; computed from the input when omitted.
        #[arg(long, value_name = "FILE")]
        stats: Option<PathBuf>,
    },
    /// Generate motion-prediction question/answer pairs.
    Vqa {
        #[command(flatten)]
        io: IoArgs,
        #[command(flatten)]
        pipeline: PipelineArgs,
        #[arg(long, value_name = "FILE")]
        stats: Option<PathBuf>,
    },
    /// Net-delta records (JSON lines) to language-action strings.
    Encode {
        #[command(flatten)]
        io: IoArgs,
        #[arg(long, default_value_t = 1, value_name = "CM")]
        cm_step: u32,
        #[arg(long, default_value_t = 1, value_name = "DEG")]
        degree_step: u32,
    },
    /// Language-action strings to net-delta records.
    Decode {
        #[command(flatten)]
        io: IoArgs,
        #[arg(long, default_value = "base", value_parser = parse_frame)]
        frame: Frame,
    },
    /// Print the attention mask for a token layout.
    MaskDump {
        #[arg(long, value_name = "N")]
        prefix: usize,
        #[arg(long, value_name = "N")]
        lang: usize,
        #[arg(long, value_name = "N")]
        act: usize,
        /// Text grid destination ("-" for stdout).
        #[arg(short, long, value_name = "FILE")]
        output: Option<PathBuf>,
        /// Also write the packed bitset (row-major, LSB first).
        #[arg(long, value_name = "FILE")]
        bits: Option<PathBuf>,
    },
    /// Train the toy flow-matching model and print its metrics trace.
    TrainToy(toy::TrainArgs),
    /// Run built-in consistency checks.
    Selfcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Random deltas in the codec sweep.
        #[arg(long, default_value_t = 20_000)]
        samples: usize,
    },
}

#[derive(Args, Debug)]
struct IoArgs {
    /// Input path, "-" or omitted for stdin.
    input: Option<PathBuf>,
    /// Output path, "-" or omitted for stdout.
    #[arg(short, long, value_name = "FILE")]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PipelineArgs {
    #[arg(long, default_value_t = lap_core::DEFAULT_HORIZON)]
    horizon: usize,
    /// Probability of expressing a sample in the base frame.
    #[arg(long, default_value_t = 0.5)]
    frame_prob: f64,
    #[arg(long, default_value_t = 0.1, value_name = "CM")]
    idle_thresh_cm: f64,
    #[arg(long, default_value_t = 0.1, value_name = "DEG")]
    idle_thresh_deg: f64,
    #[arg(long, default_value_t = 5, value_name = "STEPS")]
    idle_min_run: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads; output does not depend on this.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Check recorded per-step actions against pose differences.
    #[arg(long)]
    strict: bool,
}

impl PipelineArgs {
    fn config(&self) -> Result<PipelineConfig> {
        if self.horizon == 0 {
            bail!("--horizon must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.frame_prob) {
            bail!("--frame-prob must be in [0, 1]");
        }
        if !(self.idle_thresh_cm >= 0.0 && self.idle_thresh_deg >= 0.0) {
            bail!("idle thresholds must be non-negative");
        }
        if self.jobs == 0 {
            bail!("--jobs must be at least 1");
        }
        Ok(PipelineConfig {
            ingest: IngestOptions {
                strict: self.strict,
            },
            idle: IdleConfig {
                threshold_cm: self.idle_thresh_cm,
                threshold_deg: self.idle_thresh_deg,
                min_consecutive: self.idle_min_run,
            },
            samples: SampleConfig {
                horizon: self.horizon,
                frame_prob: self.frame_prob,
                seed: self.seed,
                ..SampleConfig::default()
            },
        })
    }
}

fn parse_frame(s: &str) -> Result<Frame, String> {
    match s {
        "base" => Ok(Frame::Base),
        "end_effector" | "end-effector" | "ee" => Ok(Frame::EndEffector),
        _ => Err(format!(
            "unknown frame {s:?} (expected base or end_effector)"
        )),
    }
}

/// An internal invariant was violated; exits with status 2.
#[derive(Debug, thiserror::Error)]
#[error("internal invariant violated: {0}")]
pub struct InvariantViolation(pub String);

fn mask_dump(layout: TokenLayout, output: Option<PathBuf>, bits: Option<PathBuf>) -> Result<()> {
    if layout.total() == 0 {
        bail!("layout must contain at least one token");
    }
    let mask = build_mask(&layout);
    if let report @ (MaskReport::SizeMismatch { .. } | MaskReport::Violation { .. }) =
        check_mask(&mask, &layout)
    {
        return Err(InvariantViolation(report.to_string()).into());
    }
    if let Some(path) = bits {
        io::write_file_atomic(&path, &mask.to_packed_bits())?;
    }
    let mut out = io::Output::create(output.as_deref())?;
    out.write_all(mask.to_text_grid().as_bytes())?;
    out.commit()
}

fn run(cli: Cli) -> Result<()> {
    if let Some(v) = cli.format_version {
        if v != FORMAT_VERSION {
            bail!("format version {v} is not supported (this build uses {FORMAT_VERSION})");
        }
    }
    match cli.command {
        Command::Stats { io, pipeline } => curate::stats(
            io.input.as_deref(),
            io.output.as_deref(),
            &pipeline.config()?,
            pipeline.jobs,
        ),
        Command::Curate {
            io,
            pipeline,
            stats,
        } => curate::samples(
            curate::Kind::Training,
            io.input.as_deref(),
            io.output.as_deref(),
            stats.as_deref(),
            &pipeline.config()?,
            pipeline.jobs,
        ),
        Command::Vqa {
            io,
            pipeline,
            stats,
        } => curate::samples(
            curate::Kind::Vqa,
            io.input.as_deref(),
            io.output.as_deref(),
            stats.as_deref(),
            &pipeline.config()?,
            pipeline.jobs,
        ),
        Command::Encode {
            io,
            cm_step,
            degree_step,
        } => {
            if cm_step == 0 || degree_step == 0 {
                bail!("quantization steps must be at least 1");
            }
            codec::encode(
                io.input.as_deref(),
                io.output.as_deref(),
                cm_step,
                degree_step,
            )
        }
        Command::Decode { io, frame } => {
            codec::decode(io.input.as_deref(), io.output.as_deref(), frame)
        }
        Command::MaskDump {
            prefix,
            lang,
            act,
            output,
            bits,
        } => mask_dump(TokenLayout::new(prefix, lang, act), output, bits),
        Command::TrainToy(args) => toy::train(&args),
        Command::Selfcheck { seed, samples } => selfcheck::run(seed, samples),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("LAP_LOG", "warn"))
        .format_timestamp(None)
        .init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<InvariantViolation>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
