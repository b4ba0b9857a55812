//! Experiment runner for the delivery simulator: validates run
//! configurations, executes seeded policy comparisons, certifies the
//! window search against exhaustive enumeration, and inspects traces.

mod config;
mod runner;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::RunConfigFile;
use edgedash_core::bandwidth::{load_trace, TraceSource};
use edgedash_core::units::TimeNs;

#[derive(Parser)]
#[command(name = "edgedash", version, about = "Cache-assisted DASH delivery simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run(RunArgs),
    /// Check a config file and print the effective settings.
    Validate { config: PathBuf },
    /// Compare the window search against exhaustive enumeration on random
    /// small instances.
    OracleCheck(OracleArgs),
    /// Summarize a bandwidth trace file.
    TraceInspect(TraceArgs),
}

#[derive(Args)]
struct RunArgs {
    config: PathBuf,
    /// Override [run].policy: anticipative | baseline | both.
    #[arg(long)]
    policy: Option<String>,
    /// Override [run].seed (also via EDGEDASH_SEED).
    #[arg(long)]
    seed: Option<u64>,
    /// Override [run].repetitions.
    #[arg(long)]
    repetitions: Option<usize>,
    /// Override [sweep].buffer_s, the fixed client buffer.
    #[arg(long, value_name = "SECONDS")]
    buffer_s: Option<f64>,
    /// Override [scheduler].window_s.
    #[arg(long, value_name = "SECONDS")]
    window_s: Option<f64>,
    /// Override [run].out_dir (also via EDGEDASH_OUT_DIR).
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Also write the per-segment download log.
    #[arg(long)]
    per_segment: bool,
    /// Dump the realized bandwidth timelines for audit.
    #[arg(long)]
    emit_timelines: bool,
}

#[derive(Args)]
struct OracleArgs {
    /// Segments per instance.
    #[arg(long, visible_alias = "n", default_value_t = 5)]
    segments: usize,
    /// Ladder rungs per instance.
    #[arg(long, visible_alias = "m", default_value_t = 3)]
    rates: usize,
    /// Number of seeded instances.
    #[arg(long, default_value_t = 100)]
    seeds: u64,
    #[arg(long, default_value_t = 0)]
    base_seed: u64,
}

#[derive(Args)]
struct TraceArgs {
    file: PathBuf,
    #[arg(long, value_name = "SECONDS", default_value_t = 1.0)]
    quantization_s: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Validate { config } => cmd_validate(&config),
        Command::OracleCheck(args) => cmd_oracle_check(args),
        Command::TraceInspect(args) => cmd_trace_inspect(args),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn load_with_overrides(
    path: &Path,
    args: Option<&RunArgs>,
) -> edgedash_core::Result<config::ResolvedConfig> {
    let mut file = RunConfigFile::load(path)?;
    if let Some(args) = args {
        if let Some(policy) = &args.policy {
            file.run.policy = policy.clone();
        }
        if let Some(seed) = args.seed {
            file.run.seed = seed;
        }
        if let Some(reps) = args.repetitions {
            file.run.repetitions = reps;
        }
        if let Some(buffer) = args.buffer_s {
            file.sweep.buffer_s = buffer;
        }
        if let Some(window) = args.window_s {
            file.scheduler.window_s = window;
        }
        if let Some(dir) = &args.out_dir {
            file.run.out_dir = dir.display().to_string();
        }
        if args.emit_timelines {
            file.output.emit_timelines = true;
        }
    }
    if let Ok(seed) = std::env::var("EDGEDASH_SEED") {
        file.run.seed = seed.parse().map_err(|_| {
            edgedash_core::SimError::Config(format!("EDGEDASH_SEED '{seed}' is not a u64"))
        })?;
    }
    if let Ok(dir) = std::env::var("EDGEDASH_OUT_DIR") {
        file.run.out_dir = dir;
    }
    let dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    file.resolve(&dir)
}

fn cmd_run(args: RunArgs) -> edgedash_core::Result<ExitCode> {
    let want_segments = args.per_segment || {
        let file = RunConfigFile::load(&args.config)?;
        !file.output.per_segment_csv.is_empty()
    };
    let resolved = load_with_overrides(&args.config, Some(&args))?;
    runner::preflight(&resolved)?;

    let artifacts = runner::execute(&resolved, want_segments)?;

    std::fs::create_dir_all(&resolved.out_dir).map_err(|e| {
        edgedash_core::SimError::Config(format!(
            "cannot create {}: {e}",
            resolved.out_dir.display()
        ))
    })?;
    let write = |name: &str, text: &str| -> edgedash_core::Result<PathBuf> {
        let path = resolved.out_dir.join(name);
        std::fs::write(&path, text).map_err(|e| {
            edgedash_core::SimError::Config(format!("cannot write {}: {e}", path.display()))
        })?;
        Ok(path)
    };
    let runs_path = write(&resolved.output.runs_csv, &artifacts.runs_csv)?;
    let summary_path = write(&resolved.output.summary_csv, &artifacts.summary_csv)?;
    println!("wrote {}", runs_path.display());
    println!("wrote {}", summary_path.display());
    if let Some(segments) = &artifacts.segments_csv {
        let name = if resolved.output.per_segment_csv.is_empty() {
            "segments.csv"
        } else {
            &resolved.output.per_segment_csv
        };
        let path = write(name, segments)?;
        println!("wrote {}", path.display());
    }
    if resolved.output.emit_timelines {
        runner::emit_timelines(&resolved, &resolved.out_dir)?;
        println!("wrote timelines for {} seed(s)", resolved.repetitions);
    }

    let stalls = artifacts
        .reports
        .iter()
        .filter(|r| r.rebuffer > TimeNs::ZERO)
        .count();
    println!(
        "{} runs, {} with rebuffering",
        artifacts.reports.len(),
        stalls
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_validate(path: &Path) -> edgedash_core::Result<ExitCode> {
    let resolved = load_with_overrides(path, None)?;
    print!("{}", config::describe(&resolved));
    println!("valid");
    Ok(ExitCode::SUCCESS)
}

fn cmd_oracle_check(args: OracleArgs) -> edgedash_core::Result<ExitCode> {
    let outcome = runner::oracle_check(args.segments, args.rates, args.seeds, args.base_seed)?;
    println!(
        "{} of {} instances agree ({} infeasible everywhere)",
        outcome.agreements, args.seeds, outcome.infeasible
    );
    if outcome.disagreements.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("disagreeing instance seeds: {:?}", outcome.disagreements);
        Ok(ExitCode::FAILURE)
    }
}

fn cmd_trace_inspect(args: TraceArgs) -> edgedash_core::Result<ExitCode> {
    let source = TraceSource::from_csv_path(&args.file)?;
    let n = source.samples.len();
    let span = source.samples[n - 1].0 - source.samples[0].0;
    let rates: Vec<f64> = source
        .samples
        .iter()
        .map(|&(_, r)| r.as_kbps_f64())
        .collect();
    let min = rates.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = rates.iter().cloned().fold(0.0f64, f64::max);
    let mean = rates.iter().sum::<f64>() / n as f64;
    println!("trace: {}", source.origin);
    println!("samples: {n}, span {:.1}s", span.as_secs_f64());
    println!("rate kbps: min {min:.1}, mean {mean:.1}, max {max:.1}");
    let quant = TimeNs::from_secs_f64(args.quantization_s);
    let tl = load_trace(&source, quant)?;
    println!(
        "quantized at {:.1}s: {} steps over {:.1}s",
        args.quantization_s,
        tl.step_count(),
        tl.horizon().as_secs_f64()
    );
    for (start, rate) in tl.steps().take(5) {
        println!(
            "  {:.1}s -> {:.1} kbps",
            start.as_secs_f64(),
            rate.as_kbps_f64()
        );
    }
    Ok(ExitCode::SUCCESS)
}
