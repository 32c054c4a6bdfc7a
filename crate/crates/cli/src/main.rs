use std::path::PathBuf;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use groundgen_cli::adapter::{serve_echo, EchoOptions};
use groundgen_cli::commands::{
    run_analyze, run_eval, run_generate, run_stream, run_validate, AnalyzeArgs, EvalArgs,
    GenerateArgs, StreamArgs, ValidateArgs,
};
use groundgen_cli::config::{load_file_config, resolve, Overrides};
use groundgen_cli::{CliError, CliResult};
use groundgen_core::scene::BBox;

/// Synthesize pick-and-place grounding instructions from object detections,
/// stream them through a forgetting buffer, and evaluate grounders.
#[derive(Parser)]
#[command(name = "groundgen", version, max_term_width = 100)]
struct Cli {
    #[command(flatten)]
    common: CommonFlags,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonFlags {
    /// Pipeline config file (TOML); flags override file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Category vocabulary file override.
    #[arg(long, global = true)]
    categories: Option<PathBuf>,
    /// Attribute vocabulary file override.
    #[arg(long, global = true)]
    attributes: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate instruction triplets for a set of scenes.
    Generate {
        /// Scene JSON files or directories of them (ordered).
        #[arg(long, required = true, num_args = 1..)]
        scenes: Vec<PathBuf>,
        /// Output triplet JSONL path.
        #[arg(long)]
        out: PathBuf,
        /// Worker threads (0 = all cores).
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Run the lifelong loop: generate, buffer with forgetting, checkpoint.
    Stream {
        /// Scene files/directories; optional when resuming existing state.
        #[arg(long, num_args = 0..)]
        scenes: Vec<PathBuf>,
        /// State directory (created if missing; resumes if present).
        #[arg(long)]
        state: PathBuf,
        /// Step log JSONL (default: <state>/log.jsonl, appended).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Corpus export directory (default: <state>/corpora).
        #[arg(long)]
        corpus_dir: Option<PathBuf>,
        /// Export checkpoints, e.g. 8,33,135,540.
        #[arg(long, value_delimiter = ',')]
        checkpoints: Option<Vec<u64>>,
        /// Process at most this many scenes, then stop (resumable).
        #[arg(long)]
        stop_after: Option<u64>,
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Score predictions against gold boxes (precision@threshold).
    Eval {
        /// Gold JSONL: {"id", "scene", "kind", "instruction", "gold_box"}.
        #[arg(long)]
        gold: Option<PathBuf>,
        /// Pre-joined pairs JSONL: {"id", "gold_box", "predicted_box"}.
        #[arg(long)]
        pairs: Option<PathBuf>,
        /// Predictions JSONL: {"id", "predicted_box"}; joined to gold by id.
        #[arg(long)]
        predictions: Option<PathBuf>,
        /// External grounder command (line-delimited JSON over stdio).
        #[arg(long)]
        adapter: Option<String>,
        /// IoU threshold override.
        #[arg(long)]
        threshold: Option<f64>,
        /// Report JSON output path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Box-size density curves (KDE) and pairwise Wasserstein distances.
    Analyze {
        /// Scenes supplying the all-objects distribution.
        #[arg(long, required = true, num_args = 1..)]
        scenes: Vec<PathBuf>,
        /// Prediction sets as label=report.json (repeatable).
        #[arg(long = "pred", value_parser = parse_labeled_path)]
        predictions: Vec<(String, PathBuf)>,
        /// Output directory for CSVs.
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Schema-check scene files and triplet files.
    Validate {
        #[arg(long, num_args = 0..)]
        scenes: Vec<PathBuf>,
        #[arg(long)]
        triplets: Option<PathBuf>,
    },
    /// Built-in external-grounder test double speaking the wire protocol.
    EchoAdapter {
        /// Fixed response box "x1,y1,x2,y2" (default: first object's box).
        #[arg(long, value_parser = parse_box)]
        r#box: Option<BBox>,
        #[arg(long, default_value_t = 1.0)]
        confidence: f64,
        /// Delay before each response, in milliseconds.
        #[arg(long, default_value_t = 0)]
        delay_ms: u64,
        /// Respond with a non-JSON line.
        #[arg(long)]
        malformed: bool,
        /// Respond with a mismatched request id.
        #[arg(long)]
        wrong_id: bool,
    },
}

fn parse_labeled_path(raw: &str) -> Result<(String, PathBuf), String> {
    match raw.split_once('=') {
        Some((label, path)) if !label.is_empty() => Ok((label.to_string(), PathBuf::from(path))),
        _ => Err(format!("expected label=path, got `{raw}`")),
    }
}

fn parse_box(raw: &str) -> Result<BBox, String> {
    let parts: Vec<f64> = raw
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    if parts.len() != 4 {
        return Err(format!("expected x1,y1,x2,y2, got `{raw}`"));
    }
    Ok(BBox::new(parts[0], parts[1], parts[2], parts[3]))
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    // The echo adapter is self-contained and needs no config.
    if let Command::EchoAdapter {
        r#box,
        confidence,
        delay_ms,
        malformed,
        wrong_id,
    } = &cli.command
    {
        let options = EchoOptions {
            fixed_box: *r#box,
            confidence: *confidence,
            delay: Duration::from_millis(*delay_ms),
            malformed: *malformed,
            wrong_id: *wrong_id,
        };
        return serve_echo(std::io::stdin().lock(), std::io::stdout().lock(), &options)
            .map_err(CliError::from);
    }

    let mut overrides = Overrides {
        seed: cli.common.seed,
        categories: cli.common.categories.clone(),
        attributes: cli.common.attributes.clone(),
        ..Overrides::default()
    };
    if let Command::Eval {
        adapter, threshold, ..
    } = &cli.command
    {
        overrides.adapter = adapter.clone();
        overrides.threshold = *threshold;
    }
    if let Command::Stream { checkpoints, .. } = &cli.command {
        overrides.checkpoints = checkpoints.clone();
    }
    let file = load_file_config(cli.common.config.as_deref())?;
    let cfg = resolve(file, &overrides)?;

    match cli.command {
        Command::Generate { scenes, out, jobs } => {
            let summary = run_generate(&cfg, &GenerateArgs { scenes, out, jobs })?;
            for s in &summary.per_scene {
                println!("{}: {} pick, {} place", s.scene_id, s.picks, s.places);
            }
            println!(
                "generated {} pick and {} place instructions from {} scene(s) ({} failed)",
                summary.picks, summary.places, summary.scenes_ok, summary.scenes_failed
            );
        }
        Command::Stream {
            scenes,
            state,
            out,
            corpus_dir,
            stop_after,
            jobs,
            ..
        } => {
            let summary = run_stream(
                &cfg,
                &StreamArgs {
                    scenes,
                    state,
                    log: out,
                    corpus_dir,
                    stop_after,
                    jobs,
                },
            )?;
            println!(
                "streamed {} step(s), final buffer size {}, checkpoints {:?} ({} scene(s) failed)",
                summary.steps,
                summary.final_buffer_size,
                summary.checkpoints_written,
                summary.scenes_failed
            );
        }
        Command::Eval {
            gold,
            pairs,
            predictions,
            out,
            ..
        } => {
            let summary = run_eval(
                &cfg,
                &EvalArgs {
                    gold,
                    pairs,
                    predictions,
                    out,
                },
            )?;
            println!(
                "precision@{} = {:.4} over {} item(s), {} flagged",
                cfg.threshold, summary.precision_at_threshold, summary.n, summary.flagged
            );
        }
        Command::Analyze {
            scenes,
            predictions,
            out_dir,
        } => {
            let summary = run_analyze(
                &cfg,
                &AnalyzeArgs {
                    scenes,
                    predictions,
                    out_dir,
                },
            )?;
            for (label, n) in &summary.samples {
                println!("sample {label}: {n} value(s)");
            }
            for (a, b, w) in &summary.distances {
                println!("W({a}, {b}) = {w:.4}");
            }
        }
        Command::Validate { scenes, triplets } => {
            let summary = run_validate(&cfg, &ValidateArgs { scenes, triplets })?;
            println!(
                "{} scene(s) ok, {} failed, {} triplet(s) checked",
                summary.scenes_ok, summary.scenes_failed, summary.triplets_checked
            );
        }
        Command::EchoAdapter { .. } => unreachable!("handled above"),
    }
    Ok(())
}
