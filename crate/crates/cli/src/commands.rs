//! The five pipeline commands: generate, stream, eval, analyze, validate.

use std::collections::HashMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use rayon::prelude::*;
use serde::Serialize;

use groundgen_core::buffer::{BufferRecord, VolatileBuffer};
use groundgen_core::eval::{iou, kde_density, precision_at, wasserstein_1d, AreaSample, EvalGrid};
use groundgen_core::grounding::{ground_external, GroundingQuery, LexicalGrounder};
use groundgen_core::instruction::{generate_scene_instructions, InstructionTriplet};
use groundgen_core::scene::Scene;

use crate::adapter::SubprocessAdapter;
use crate::config::ResolvedConfig;
use crate::formats::{
    self, expand_scene_paths, load_scene, read_eval_pairs, read_gold_items, read_predictions,
    read_report, read_triplets_jsonl, write_density_csv, write_report, GoldItem, ReportDoc,
    ReportPair,
};
use crate::persist::{
    self, load_buffer, load_stream_manifest, save_buffer, save_stream_manifest, StreamManifest,
};
use crate::{CliError, CliResult};

type SceneGenResult = Result<(Scene, Vec<InstructionTriplet>), (PathBuf, CliError)>;

fn thread_pool(jobs: usize) -> CliResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Config(format!("cannot build worker pool: {e}")))
}

fn generate_for_scene(path: &Path, cfg: &ResolvedConfig) -> SceneGenResult {
    let scene =
        load_scene(path, &cfg.categories, &cfg.attributes).map_err(|e| (path.to_path_buf(), e))?;
    let generated = generate_scene_instructions(&scene, &cfg.generation)
        .map_err(|e| (path.to_path_buf(), CliError::parse(e)))?;
    let mut triplets = generated.picks;
    triplets.extend(generated.places);
    Ok((scene, triplets))
}

#[derive(Debug, Clone, Serialize)]
pub struct SceneCount {
    pub scene_id: String,
    pub picks: usize,
    pub places: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct GenerateSummary {
    pub scenes_ok: usize,
    pub scenes_failed: usize,
    pub picks: usize,
    pub places: usize,
    pub per_scene: Vec<SceneCount>,
}

pub struct GenerateArgs {
    pub scenes: Vec<PathBuf>,
    pub out: PathBuf,
    pub jobs: usize,
}

/// Parse scenes, synthesize instructions for every object, and write one
/// triplet JSONL. Scene-level work fans out to the pool; output order is
/// the scene order, so the bytes do not depend on `jobs`.
pub fn run_generate(cfg: &ResolvedConfig, args: &GenerateArgs) -> CliResult<GenerateSummary> {
    let paths = expand_scene_paths(&args.scenes)?;
    let pool = thread_pool(args.jobs)?;
    let results: Vec<SceneGenResult> = pool.install(|| {
        paths
            .par_iter()
            .map(|p| generate_for_scene(p, cfg))
            .collect()
    });

    let file = fs::File::create(&args.out)
        .map_err(|e| CliError::Io(format!("{}: {e}", args.out.display())))?;
    let mut writer = BufWriter::new(file);
    let mut summary = GenerateSummary {
        scenes_ok: 0,
        scenes_failed: 0,
        picks: 0,
        places: 0,
        per_scene: Vec::new(),
    };
    for result in results {
        match result {
            Ok((scene, triplets)) => {
                formats::write_triplets_jsonl(&mut writer, &triplets)?;
                let picks = triplets
                    .iter()
                    .filter(|t| t.kind == groundgen_core::instruction::TaskKind::Pick)
                    .count();
                summary.scenes_ok += 1;
                summary.picks += picks;
                summary.places += triplets.len() - picks;
                summary.per_scene.push(SceneCount {
                    scene_id: scene.scene_id,
                    picks,
                    places: triplets.len() - picks,
                });
            }
            Err((path, e)) => {
                eprintln!("warning: skipping {}: {e}", path.display());
                summary.scenes_failed += 1;
            }
        }
    }
    writer.flush()?;
    if summary.scenes_ok == 0 {
        return Err(CliError::Parse("every scene failed to parse".to_string()));
    }
    Ok(summary)
}

#[derive(Debug, Clone, Serialize, PartialEq, Eq)]
pub struct StepLog {
    pub step: u64,
    pub scene_id: String,
    pub inserted: usize,
    pub evicted: Vec<u64>,
    pub buffer_size: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct StreamSummary {
    pub steps: u64,
    pub scenes_failed: usize,
    pub final_buffer_size: usize,
    pub checkpoints_written: Vec<u64>,
}

pub struct StreamArgs {
    pub scenes: Vec<PathBuf>,
    pub state: PathBuf,
    pub log: Option<PathBuf>,
    pub corpus_dir: Option<PathBuf>,
    pub stop_after: Option<u64>,
    pub jobs: usize,
}

/// The lifelong loop: per scene, generate instructions, advance the buffer,
/// log the step, and export a corpus snapshot at each checkpoint. State is
/// persisted after every step, so an interrupted stream resumes exactly.
pub fn run_stream(cfg: &ResolvedConfig, args: &StreamArgs) -> CliResult<StreamSummary> {
    let resuming = persist::state_exists(&args.state);
    let mut manifest = if resuming {
        let manifest = load_stream_manifest(&args.state)?;
        if !args.scenes.is_empty() {
            let given = expand_scene_paths(&args.scenes)?;
            if given != manifest.scene_files {
                return Err(CliError::Config(
                    "scene list differs from the persisted stream manifest".to_string(),
                ));
            }
        }
        if manifest.master_seed != cfg.master_seed {
            return Err(CliError::Config(format!(
                "seed {} differs from the persisted stream's seed {}",
                cfg.master_seed, manifest.master_seed
            )));
        }
        manifest
    } else {
        StreamManifest {
            scene_files: expand_scene_paths(&args.scenes)?,
            position: 0,
            master_seed: cfg.master_seed,
        }
    };
    let mut buffer = if resuming {
        let buffer = load_buffer(&args.state)?;
        if *buffer.config() != cfg.buffer {
            return Err(CliError::Config(
                "buffer config differs from the persisted stream state".to_string(),
            ));
        }
        buffer
    } else {
        VolatileBuffer::new(cfg.buffer).map_err(|e| CliError::Config(e.to_string()))?
    };

    fs::create_dir_all(&args.state)?;
    let corpus_dir = args
        .corpus_dir
        .clone()
        .unwrap_or_else(|| args.state.join("corpora"));
    let log_path = args
        .log
        .clone()
        .unwrap_or_else(|| args.state.join("log.jsonl"));
    let log_file = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&log_path)
        .map_err(|e| CliError::Io(format!("{}: {e}", log_path.display())))?;
    let mut log = BufWriter::new(log_file);

    let pool = thread_pool(args.jobs)?;
    let mut summary = StreamSummary {
        steps: 0,
        scenes_failed: 0,
        final_buffer_size: buffer.len(),
        checkpoints_written: Vec::new(),
    };

    let end = match args.stop_after {
        Some(n) => (manifest.position + n as usize).min(manifest.scene_files.len()),
        None => manifest.scene_files.len(),
    };

    const CHUNK: usize = 32;
    let mut position = manifest.position;
    while position < end {
        let chunk_end = (position + CHUNK).min(end);
        let chunk = &manifest.scene_files[position..chunk_end];
        let results: Vec<SceneGenResult> = pool.install(|| {
            chunk
                .par_iter()
                .map(|p| generate_for_scene(p, cfg))
                .collect()
        });
        for result in results {
            position += 1;
            match result {
                Ok((mut scene, triplets)) => {
                    let step = buffer.current_step() + 1;
                    scene.time_step = step;
                    let inserted = triplets.len();
                    let report = buffer
                        .advance(BufferRecord {
                            birth_step: step,
                            scene: scene.clone(),
                            triplets,
                        })
                        .map_err(|e| CliError::Parse(e.to_string()))?;
                    let entry = StepLog {
                        step,
                        scene_id: scene.scene_id,
                        inserted,
                        evicted: report.evicted,
                        buffer_size: buffer.len(),
                    };
                    serde_json::to_writer(&mut log, &entry).map_err(CliError::io)?;
                    log.write_all(b"\n")?;
                    log.flush()?;

                    if cfg.checkpoints.contains(&step) {
                        export_corpus(&corpus_dir, step, &buffer)?;
                        summary.checkpoints_written.push(step);
                    }
                    save_buffer(&args.state, &buffer)?;
                    manifest.position = position;
                    save_stream_manifest(&args.state, &manifest)?;
                    summary.steps += 1;
                }
                Err((path, e)) => {
                    eprintln!("warning: skipping {}: {e}", path.display());
                    summary.scenes_failed += 1;
                    manifest.position = position;
                    save_stream_manifest(&args.state, &manifest)?;
                }
            }
        }
    }
    summary.final_buffer_size = buffer.len();
    Ok(summary)
}

/// Serialize the buffer snapshot as a training corpus.
fn export_corpus(corpus_dir: &Path, step: u64, buffer: &VolatileBuffer) -> CliResult<()> {
    fs::create_dir_all(corpus_dir)?;
    let path = corpus_dir.join(format!("corpus-step-{step:06}.jsonl"));
    let file =
        fs::File::create(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let mut writer = BufWriter::new(file);
    for record in buffer.records() {
        formats::write_triplets_jsonl(&mut writer, &record.triplets)?;
    }
    writer.flush()?;
    Ok(())
}

pub struct EvalArgs {
    pub gold: Option<PathBuf>,
    pub pairs: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
    pub out: PathBuf,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalSummary {
    pub n: usize,
    pub precision_at_threshold: f64,
    pub flagged: usize,
}

/// Evaluate predictions against gold boxes. Prediction source, in priority
/// order: a pre-joined pairs file, a predictions file joined by id, a
/// configured external adapter, or the built-in lexical grounder.
pub fn run_eval(cfg: &ResolvedConfig, args: &EvalArgs) -> CliResult<EvalSummary> {
    let report = if let Some(pairs_path) = &args.pairs {
        let pairs = read_eval_pairs(pairs_path)?;
        let core = precision_at(&pairs, cfg.threshold).map_err(CliError::parse)?;
        ReportDoc {
            n: core.n,
            threshold: core.threshold,
            precision_at_threshold: core.precision_at_threshold,
            pairs: pairs
                .iter()
                .zip(&core.ious)
                .map(|(p, v)| ReportPair {
                    id: p.id.clone(),
                    iou: *v,
                    success: *v > cfg.threshold,
                    gold_box: p.gold_box,
                    predicted_box: Some(p.predicted_box),
                    image_width: None,
                    image_height: None,
                    flags: Vec::new(),
                })
                .collect(),
            failures: core.failures,
        }
    } else {
        let gold_path = args.gold.as_ref().ok_or_else(|| {
            CliError::Config("eval needs --gold items or a --pairs file".to_string())
        })?;
        let items = read_gold_items(gold_path)?;
        if items.is_empty() {
            return Err(CliError::Parse(format!(
                "{}: no gold items",
                gold_path.display()
            )));
        }
        let outcomes = if let Some(pred_path) = &args.predictions {
            eval_against_predictions(&items, pred_path)?
        } else if let Some(command) = &cfg.adapter_command {
            eval_with_adapter(cfg, &items, command)?
        } else {
            eval_with_lexical(cfg, &items)
        };
        build_report(cfg.threshold, &items, outcomes)
    };

    write_report(&args.out, &report)?;
    let summary = EvalSummary {
        n: report.n,
        precision_at_threshold: report.precision_at_threshold,
        flagged: report.pairs.iter().filter(|p| !p.flags.is_empty()).count(),
    };
    Ok(summary)
}

struct Outcome {
    predicted_box: Option<groundgen_core::scene::BBox>,
    flags: Vec<String>,
}

fn eval_against_predictions(items: &[GoldItem], pred_path: &Path) -> CliResult<Vec<Outcome>> {
    let predictions = read_predictions(pred_path)?;
    let by_id: HashMap<&str, &formats::PredictionLine> =
        predictions.iter().map(|p| (p.id.as_str(), p)).collect();
    Ok(items
        .iter()
        .map(|item| match by_id.get(item.id.as_str()) {
            Some(p) => Outcome {
                predicted_box: Some(p.predicted_box),
                flags: Vec::new(),
            },
            None => Outcome {
                predicted_box: None,
                flags: vec!["missing_prediction".to_string()],
            },
        })
        .collect())
}

fn eval_with_lexical(cfg: &ResolvedConfig, items: &[GoldItem]) -> Vec<Outcome> {
    let grounder = LexicalGrounder::new(&cfg.generation.lexicon, &cfg.categories, &cfg.attributes)
        .with_relations(cfg.generation.relations)
        .with_shift_extent(cfg.generation.shift_extent);
    items
        .iter()
        .map(|item| {
            let query = GroundingQuery {
                scene: item.scene.clone(),
                instruction: item.instruction.clone(),
                kind: item.kind,
            };
            match grounder.ground(&query) {
                Ok(result) => Outcome {
                    predicted_box: Some(result.bbox),
                    flags: if result.clamped {
                        vec!["clamped".to_string()]
                    } else {
                        Vec::new()
                    },
                },
                Err(e) => Outcome {
                    predicted_box: None,
                    flags: vec![format!("grounding_failed: {e}")],
                },
            }
        })
        .collect()
}

fn eval_with_adapter(
    cfg: &ResolvedConfig,
    items: &[GoldItem],
    command: &str,
) -> CliResult<Vec<Outcome>> {
    let timeout = Duration::from_secs(cfg.adapter_timeout_secs);
    let mut adapter =
        SubprocessAdapter::spawn(command, timeout).map_err(|e| CliError::Adapter(e.to_string()))?;
    Ok(items
        .iter()
        .map(|item| {
            let query = GroundingQuery {
                scene: item.scene.clone(),
                instruction: item.instruction.clone(),
                kind: item.kind,
            };
            match ground_external(&query, &mut adapter) {
                Ok(result) => Outcome {
                    predicted_box: Some(result.bbox),
                    flags: if result.clamped {
                        vec!["clamped".to_string()]
                    } else {
                        Vec::new()
                    },
                },
                Err(e) => Outcome {
                    predicted_box: None,
                    flags: vec![format!("adapter_failed: {e}")],
                },
            }
        })
        .collect())
}

fn build_report(threshold: f64, items: &[GoldItem], outcomes: Vec<Outcome>) -> ReportDoc {
    let mut pairs = Vec::with_capacity(items.len());
    let mut failures = Vec::new();
    let mut successes = 0usize;
    for (item, outcome) in items.iter().zip(outcomes) {
        let value = outcome
            .predicted_box
            .map(|p| iou(&item.gold_box, &p))
            .unwrap_or(0.0);
        let success = value > threshold;
        if success {
            successes += 1;
        } else {
            failures.push(item.id.clone());
        }
        pairs.push(ReportPair {
            id: item.id.clone(),
            iou: value,
            success,
            gold_box: item.gold_box,
            predicted_box: outcome.predicted_box,
            image_width: Some(item.scene.image_width),
            image_height: Some(item.scene.image_height),
            flags: outcome.flags,
        });
    }
    ReportDoc {
        n: items.len(),
        threshold,
        precision_at_threshold: successes as f64 / items.len() as f64,
        pairs,
        failures,
    }
}

pub struct AnalyzeArgs {
    pub scenes: Vec<PathBuf>,
    /// (label, eval-report path) pairs.
    pub predictions: Vec<(String, PathBuf)>,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalyzeSummary {
    pub samples: Vec<(String, usize)>,
    /// (label a, label b, distance), both directions.
    pub distances: Vec<(String, String, f64)>,
}

/// Density analysis of box sizes: Gaussian KDE per sample plus pairwise
/// Wasserstein distances, on the percent-of-image-area scale.
pub fn run_analyze(cfg: &ResolvedConfig, args: &AnalyzeArgs) -> CliResult<AnalyzeSummary> {
    let paths = expand_scene_paths(&args.scenes)?;
    let mut all_values = Vec::new();
    for path in &paths {
        let scene = load_scene(path, &cfg.categories, &cfg.attributes)?;
        for object in &scene.objects {
            all_values.push(AreaSample::percent_area(
                &object.bbox,
                scene.image_width,
                scene.image_height,
            ));
        }
    }
    let mut samples =
        vec![AreaSample::new("all".to_string(), all_values).map_err(CliError::parse)?];

    for (label, report_path) in &args.predictions {
        let report = read_report(report_path)?;
        let mut values = Vec::new();
        for pair in &report.pairs {
            if let (Some(bbox), Some(w), Some(h)) =
                (pair.predicted_box, pair.image_width, pair.image_height)
            {
                values.push(AreaSample::percent_area(&bbox, w, h));
            }
        }
        if values.is_empty() {
            eprintln!("warning: prediction set `{label}` is empty; skipped");
            continue;
        }
        samples.push(AreaSample::new(label.clone(), values).map_err(CliError::parse)?);
    }

    fs::create_dir_all(&args.out_dir)?;
    let lo = samples
        .iter()
        .flat_map(|s| s.values.iter().copied())
        .fold(f64::INFINITY, f64::min);
    let hi = samples
        .iter()
        .flat_map(|s| s.values.iter().copied())
        .fold(f64::NEG_INFINITY, f64::max);
    let pad = ((hi - lo) * 0.25).max(1.0);
    let grid = EvalGrid::new(lo - pad, hi + pad, cfg.grid_points);

    for sample in &samples {
        if sample.values.len() < 2 {
            eprintln!(
                "warning: sample `{}` too small for a density; skipped",
                sample.label
            );
            continue;
        }
        let curve = kde_density(sample, cfg.bandwidth_factor, &grid).map_err(CliError::parse)?;
        write_density_csv(
            &args.out_dir.join(format!("density-{}.csv", sample.label)),
            &curve,
        )?;
    }

    let mut distances = Vec::new();
    for a in &samples {
        for b in &samples {
            if a.label == b.label {
                continue;
            }
            let w = wasserstein_1d(a, b).map_err(CliError::parse)?;
            distances.push((a.label.clone(), b.label.clone(), w));
        }
    }
    let dist_path = args.out_dir.join("distances.csv");
    let file = fs::File::create(&dist_path)
        .map_err(|e| CliError::Io(format!("{}: {e}", dist_path.display())))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "a,b,wasserstein")?;
    for (a, b, d) in &distances {
        writeln!(w, "{a},{b},{d}")?;
    }
    w.flush()?;

    Ok(AnalyzeSummary {
        samples: samples
            .iter()
            .map(|s| (s.label.clone(), s.values.len()))
            .collect(),
        distances,
    })
}

pub struct ValidateArgs {
    pub scenes: Vec<PathBuf>,
    pub triplets: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidateSummary {
    pub scenes_ok: usize,
    pub scenes_failed: usize,
    pub triplets_checked: usize,
}

/// Schema-check scene files (and optionally a triplet file) against the
/// configured vocabularies, reporting every problem before failing.
pub fn run_validate(cfg: &ResolvedConfig, args: &ValidateArgs) -> CliResult<ValidateSummary> {
    let mut summary = ValidateSummary {
        scenes_ok: 0,
        scenes_failed: 0,
        triplets_checked: 0,
    };
    if !args.scenes.is_empty() {
        let paths = expand_scene_paths(&args.scenes)?;
        for path in &paths {
            match load_scene(path, &cfg.categories, &cfg.attributes) {
                Ok(scene) => {
                    println!("ok {} ({} objects)", scene.scene_id, scene.objects.len());
                    summary.scenes_ok += 1;
                }
                Err(e) => {
                    println!("error {}: {e}", path.display());
                    summary.scenes_failed += 1;
                }
            }
        }
    }
    let mut bad_triplets = 0usize;
    if let Some(path) = &args.triplets {
        let triplets = read_triplets_jsonl(path)?;
        for (i, t) in triplets.iter().enumerate() {
            if !t.target_box.is_valid() {
                println!("error {}:{}: degenerate target box", path.display(), i + 1);
                bad_triplets += 1;
            }
        }
        summary.triplets_checked = triplets.len();
    }
    if summary.scenes_failed > 0 || bad_triplets > 0 {
        return Err(CliError::Parse(format!(
            "{} scene file(s) and {} triplet line(s) invalid",
            summary.scenes_failed, bad_triplets
        )));
    }
    Ok(summary)
}
