//! File formats: scene JSON, vocabulary token files, instruction-triplet
//! JSONL, evaluation inputs, report JSON, and density CSV.
//!
//! Scene schema, one file per scene:
//!
//! ```json
//! {"scene_id": "s1", "image_width": 640, "image_height": 480,
//!  "objects": [{"id": 0, "category": "cup", "attributes": ["yellow"],
//!               "box": [100.0, 50.0, 160.0, 110.0]}]}
//! ```
//!
//! Vocabulary files are UTF-8, one token per line. Triplet files are JSONL,
//! one `InstructionTriplet` per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use groundgen_core::eval::EvalPair;
use groundgen_core::instruction::{InstructionTriplet, TaskKind};
use groundgen_core::scene::{BBox, Scene, VocabKind, Vocabulary};

use crate::{CliError, CliResult};

/// Load a vocabulary file; duplicate tokens are reported on stderr and the
/// first occurrence kept.
pub fn load_vocabulary(path: &Path, kind: VocabKind) -> CliResult<Vocabulary> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read vocabulary {}: {e}", path.display())))?;
    let load = Vocabulary::from_lines(kind, text.lines())
        .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
    for token in &load.duplicates {
        eprintln!(
            "warning: duplicate {kind:?} token `{token}` in {} (first occurrence kept)",
            path.display()
        );
    }
    Ok(load.vocabulary)
}

/// Parse and fully validate one scene file.
pub fn load_scene(
    path: &Path,
    categories: &Vocabulary,
    attributes: &Vocabulary,
) -> CliResult<Scene> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read scene {}: {e}", path.display())))?;
    let scene: Scene = serde_json::from_str(&text)
        .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
    scene
        .validate(categories, attributes)
        .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
    Ok(scene)
}

/// Serialize a scene to its wire form (compact JSON, no time step).
pub fn scene_to_json(scene: &Scene) -> String {
    serde_json::to_string(scene).expect("scene serialization cannot fail")
}

pub fn save_scene(path: &Path, scene: &Scene) -> CliResult<()> {
    let mut out = scene_to_json(scene);
    out.push('\n');
    std::fs::write(path, out)?;
    Ok(())
}

/// Expand scene arguments: files are kept, directories contribute their
/// `*.json` entries sorted by file name. Order is significant; it defines
/// stream time steps.
pub fn expand_scene_paths(args: &[PathBuf]) -> CliResult<Vec<PathBuf>> {
    let mut out = Vec::new();
    for arg in args {
        if arg.is_dir() {
            let mut entries: Vec<PathBuf> = std::fs::read_dir(arg)
                .map_err(|e| CliError::Io(format!("{}: {e}", arg.display())))?
                .filter_map(|r| r.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "json"))
                .collect();
            entries.sort();
            out.extend(entries);
        } else {
            out.push(arg.clone());
        }
    }
    if out.is_empty() {
        return Err(CliError::Config("no scene files given".into()));
    }
    Ok(out)
}

pub fn write_triplets_jsonl<W: Write>(mut w: W, triplets: &[InstructionTriplet]) -> CliResult<()> {
    for t in triplets {
        serde_json::to_writer(&mut w, t).map_err(CliError::io)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_triplets_jsonl(path: &Path) -> CliResult<Vec<InstructionTriplet>> {
    read_jsonl(path)
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<Vec<T>> {
    let file = File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line)
            .map_err(|e| CliError::Parse(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
        out.push(value);
    }
    Ok(out)
}

/// One gold evaluation item: a grounding query plus its reference box.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GoldItem {
    pub id: String,
    pub scene: Scene,
    pub kind: TaskKind,
    pub instruction: String,
    pub gold_box: BBox,
}

pub fn read_gold_items(path: &Path) -> CliResult<Vec<GoldItem>> {
    read_jsonl(path)
}

/// One externally produced prediction, matched to gold items by id.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictionLine {
    pub id: String,
    pub predicted_box: BBox,
    #[serde(default)]
    pub confidence: Option<f64>,
}

pub fn read_predictions(path: &Path) -> CliResult<Vec<PredictionLine>> {
    read_jsonl(path)
}

/// Pre-joined evaluation pairs (`{"id", "gold_box", "predicted_box"}`).
pub fn read_eval_pairs(path: &Path) -> CliResult<Vec<EvalPair>> {
    read_jsonl(path)
}

/// Per-item evaluation detail in a report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportPair {
    pub id: String,
    pub iou: f64,
    pub success: bool,
    pub gold_box: BBox,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub predicted_box: Option<BBox>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub image_width: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub image_height: Option<u32>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub flags: Vec<String>,
}

/// Evaluation report document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportDoc {
    pub n: usize,
    pub threshold: f64,
    pub precision_at_threshold: f64,
    pub pairs: Vec<ReportPair>,
    pub failures: Vec<String>,
}

pub fn write_report(path: &Path, report: &ReportDoc) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(report).map_err(CliError::io)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_report(path: &Path) -> CliResult<ReportDoc> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
}

/// Write a density curve as `grid,value` CSV.
pub fn write_density_csv(path: &Path, curve: &groundgen_core::eval::DensityCurve) -> CliResult<()> {
    let file = File::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "grid,value")?;
    for (x, v) in curve.grid.iter().zip(&curve.values) {
        writeln!(w, "{x},{v}")?;
    }
    w.flush()?;
    Ok(())
}
