//! `psfr` command line front end: signal extraction, keyframe selection,
//! evaluation, parameter evolution, benchmarking, and synthetic corpora.
//!
//! Exit codes: 0 on success, 1 when processing data fails (bad media,
//! missing caches, metric errors), 2 for usage errors (bad flags or config).

mod commands;
mod config;

use clap::{Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        CliError::Data(msg.into())
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(msg) | CliError::Data(msg) => f.write_str(msg),
        }
    }
}

macro_rules! data_error_from {
    ($($ty:ty),+ $(,)?) => {
        $(impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::Data(e.to_string())
            }
        })+
    };
}

data_error_from!(
    std::io::Error,
    serde_json::Error,
    psfr_core::media::MediaError,
    psfr_core::signals::SignalError,
    psfr_core::metrics::MetricError,
    psfr_core::selector::SelectorError,
    psfr_core::evolve::EvolveError,
    psfr_core::synth::SynthError,
);

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TimingArg {
    /// Measure real elapsed time per selection.
    Wallclock,
    /// Report zero elapsed time; makes outputs byte-reproducible.
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SelectorKind {
    Uniform,
    Psfr,
}

#[derive(Parser)]
#[command(name = "psfr", version, about = "Training-free keyframe selection toolkit")]
struct Cli {
    /// JSON config file; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Worker threads for parallel stages (0 = all cores).
    #[arg(long, global = true, env = "PSFR_THREADS", value_name = "N")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract per-frame signals from frame directories into caches.
    Signals {
        /// Frame directories, one per video.
        #[arg(required = true, value_name = "DIR")]
        videos: Vec<PathBuf>,
        #[arg(long, value_name = "DIR")]
        cache_dir: PathBuf,
        /// Downscale frames to WxH before processing.
        #[arg(long, value_name = "WxH")]
        resize: Option<String>,
        /// Recompute even when the cache is up to date.
        #[arg(long)]
        force: bool,
    },
    /// Select keyframes for annotated instances using cached signals.
    Select {
        #[arg(long, value_name = "DIR")]
        cache_dir: PathBuf,
        /// Instances as JSON lines.
        #[arg(long, value_name = "FILE")]
        annotations: PathBuf,
        /// Frame budget K.
        #[arg(long, value_name = "K")]
        k: Option<usize>,
        #[arg(long, value_enum, default_value = "psfr")]
        selector: SelectorKind,
        /// Selector parameters as JSON.
        #[arg(long, value_name = "FILE")]
        params: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "wallclock")]
        timing: TimingArg,
        /// Output JSONL of selections.
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Score selections against evidence annotations.
    Eval {
        /// Selections JSONL produced by `select`.
        #[arg(long, value_name = "FILE")]
        selections: PathBuf,
        #[arg(long, value_name = "FILE")]
        annotations: PathBuf,
        /// Time-discount floor in (0, 1].
        #[arg(long)]
        alpha: Option<f64>,
        /// Time-discount curvature (> 0).
        #[arg(long)]
        gamma: Option<f64>,
        /// Time budget in seconds for the discount.
        #[arg(long)]
        t_max: Option<f64>,
        #[arg(long, value_name = "K")]
        k: Option<usize>,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Evolve selector parameters against annotated instances.
    Evolve {
        #[arg(long, value_name = "DIR")]
        cache_dir: PathBuf,
        #[arg(long, value_name = "FILE")]
        annotations: PathBuf,
        #[arg(long)]
        islands: Option<usize>,
        #[arg(long)]
        population: Option<usize>,
        #[arg(long)]
        generations: Option<usize>,
        /// Mutation scale relative to each gene's range.
        #[arg(long)]
        sigma: Option<f64>,
        /// Per-flag mutation probability.
        #[arg(long)]
        flip_prob: Option<f64>,
        #[arg(long)]
        migration_interval: Option<usize>,
        #[arg(long)]
        archive_size: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        t_max: Option<f64>,
        #[arg(long, value_name = "K")]
        k: Option<usize>,
        #[arg(long, value_enum, default_value = "zero")]
        timing: TimingArg,
        /// Write a resumable checkpoint every generation.
        #[arg(long, value_name = "DIR")]
        checkpoint_dir: Option<PathBuf>,
        /// Resume from a checkpoint written with the same config.
        #[arg(long, value_name = "FILE")]
        resume: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Time signal extraction and selection on one video.
    Bench {
        /// Frame directory, or a signal cache to skip extraction.
        #[arg(value_name = "PATH")]
        input: PathBuf,
        #[arg(long, default_value = "5")]
        reps: usize,
        #[arg(long, value_name = "K")]
        k: Option<usize>,
        #[arg(long, value_name = "FILE")]
        params: Option<PathBuf>,
        #[arg(long, value_name = "WxH")]
        resize: Option<String>,
    },
    /// Render a synthetic corpus with known scene boundaries.
    Synth {
        /// Corpus spec as JSON.
        #[arg(value_name = "SPEC")]
        spec: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Override the spec's corpus seed.
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file_cfg = config::load_file_config(cli.config.as_deref())?;
    let threads = cli.threads.or(file_cfg.threads).unwrap_or(0);
    psfr_core::parallel::configure_threads(threads);

    match cli.command {
        Command::Signals {
            videos,
            cache_dir,
            resize,
            force,
        } => commands::cmd_signals(&videos, &cache_dir, resize.as_deref(), force, &file_cfg),
        Command::Select {
            cache_dir,
            annotations,
            k,
            selector,
            params,
            timing,
            out,
        } => commands::cmd_select(
            &cache_dir,
            &annotations,
            k,
            selector,
            params.as_ref(),
            timing,
            &out,
            &file_cfg,
        ),
        Command::Eval {
            selections,
            annotations,
            alpha,
            gamma,
            t_max,
            k,
            out,
        } => commands::cmd_eval(
            &selections,
            &annotations,
            alpha,
            gamma,
            t_max,
            k,
            out.as_ref(),
            &file_cfg,
        ),
        Command::Evolve {
            cache_dir,
            annotations,
            islands,
            population,
            generations,
            sigma,
            flip_prob,
            migration_interval,
            archive_size,
            seed,
            alpha,
            gamma,
            t_max,
            k,
            timing,
            checkpoint_dir,
            resume,
            out,
        } => commands::cmd_evolve(
            commands::EvolveArgs {
                cache_dir: &cache_dir,
                annotations: &annotations,
                islands,
                population,
                generations,
                sigma,
                flip_prob,
                migration_interval,
                archive_size,
                seed,
                alpha,
                gamma,
                t_max,
                k,
                timing,
                checkpoint_dir: checkpoint_dir.as_ref(),
                resume: resume.as_ref(),
                out: out.as_ref(),
            },
            &file_cfg,
        ),
        Command::Bench {
            input,
            reps,
            k,
            params,
            resize,
        } => commands::cmd_bench(&input, reps, k, params.as_ref(), resize.as_deref(), &file_cfg),
        Command::Synth { spec, out, seed } => commands::cmd_synth(&spec, &out, seed),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
