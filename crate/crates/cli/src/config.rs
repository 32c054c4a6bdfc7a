//! Declarative pipeline configuration: one TOML document, overridable by
//! command-line flags. See the README for the schema.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use groundgen_core::buffer::BufferConfig;
use groundgen_core::instruction::{CommandLexicon, GenerationConfig};
use groundgen_core::relations::RelationConfig;
use groundgen_core::scene::{VocabKind, Vocabulary};

use crate::formats::load_vocabulary;
use crate::{CliError, CliResult};

/// The stream checkpoints used when none are configured.
pub const DEFAULT_CHECKPOINTS: [u64; 4] = [8, 33, 135, 540];

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub vocab: VocabSection,
    #[serde(default)]
    pub relations: RelationConfig,
    #[serde(default)]
    pub generation: GenerationSection,
    #[serde(default)]
    pub buffer: BufferSection,
    #[serde(default)]
    pub stream: StreamSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub adapter: AdapterSection,
    #[serde(default)]
    pub analyze: AnalyzeSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VocabSection {
    pub categories: Option<PathBuf>,
    pub attributes: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerationSection {
    pub pick_terms: Vec<String>,
    pub place_terms: Vec<String>,
    pub prepositions: Vec<groundgen_core::instruction::Preposition>,
    pub require_unique: bool,
    pub max_per_object: Option<usize>,
    pub shift_extent: f64,
}

impl Default for GenerationSection {
    fn default() -> Self {
        let lexicon = CommandLexicon::default();
        Self {
            pick_terms: lexicon.pick_terms,
            place_terms: lexicon.place_terms,
            prepositions: lexicon.prepositions,
            require_unique: true,
            max_per_object: None,
            shift_extent: 1.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BufferSection {
    pub capacity: u64,
    pub gamma: f64,
    /// Defaults to the master seed.
    pub seed: Option<u64>,
}

impl Default for BufferSection {
    fn default() -> Self {
        Self {
            capacity: 540,
            gamma: 0.1,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StreamSection {
    pub checkpoints: Vec<u64>,
}

impl Default for StreamSection {
    fn default() -> Self {
        Self {
            checkpoints: DEFAULT_CHECKPOINTS.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub threshold: f64,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { threshold: 0.5 }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdapterSection {
    /// Command line to spawn, split on whitespace.
    pub command: Option<String>,
    pub timeout_secs: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalyzeSection {
    /// Multiplier on the Scott's-rule bandwidth.
    pub bandwidth_factor: f64,
    pub grid_points: usize,
}

impl Default for AnalyzeSection {
    fn default() -> Self {
        Self {
            bandwidth_factor: 3.0,
            grid_points: 1001,
        }
    }
}

/// Flag values that override the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub threshold: Option<f64>,
    pub adapter: Option<String>,
    pub checkpoints: Option<Vec<u64>>,
    pub categories: Option<PathBuf>,
    pub attributes: Option<PathBuf>,
}

/// A validated, fully resolved configuration with loaded vocabularies.
#[derive(Debug, Clone)]
pub struct ResolvedConfig {
    pub master_seed: u64,
    pub categories: Vocabulary,
    pub attributes: Vocabulary,
    pub generation: GenerationConfig,
    pub buffer: BufferConfig,
    pub checkpoints: Vec<u64>,
    pub threshold: f64,
    pub adapter_command: Option<String>,
    pub adapter_timeout_secs: u64,
    pub bandwidth_factor: f64,
    pub grid_points: usize,
}

pub fn load_file_config(path: Option<&Path>) -> CliResult<FileConfig> {
    match path {
        None => Ok(FileConfig::default()),
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CliError::Config(format!("cannot read config {}: {e}", path.display()))
            })?;
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
        }
    }
}

/// Resolve a config file plus overrides into runnable settings, loading and
/// checking the vocabularies. Duplicate vocabulary tokens are reported on
/// stderr and the first occurrence kept.
pub fn resolve(file: FileConfig, overrides: &Overrides) -> CliResult<ResolvedConfig> {
    let master_seed = overrides.seed.unwrap_or(file.seed);

    let categories_path = overrides
        .categories
        .clone()
        .or(file.vocab.categories)
        .ok_or_else(|| {
            CliError::Config(
                "no category vocabulary (set [vocab].categories or --categories)".into(),
            )
        })?;
    let attributes_path = overrides
        .attributes
        .clone()
        .or(file.vocab.attributes)
        .ok_or_else(|| {
            CliError::Config(
                "no attribute vocabulary (set [vocab].attributes or --attributes)".into(),
            )
        })?;
    let categories = load_vocabulary(&categories_path, VocabKind::Category)?;
    let attributes = load_vocabulary(&attributes_path, VocabKind::Attribute)?;

    let g = file.generation;
    if g.shift_extent.is_nan() || g.shift_extent < 0.0 {
        return Err(CliError::Config(
            "generation.shift_extent must be >= 0".into(),
        ));
    }
    let r = file.relations;
    for (name, value) in [
        ("relations.margin_x_frac", r.margin_x_frac),
        ("relations.margin_y_frac", r.margin_y_frac),
        ("relations.nearby_radius_factor", r.nearby_radius_factor),
    ] {
        if value.is_nan() || value <= 0.0 {
            return Err(CliError::Config(format!("{name} must be positive")));
        }
    }
    let lexicon = CommandLexicon {
        pick_terms: g.pick_terms,
        place_terms: g.place_terms,
        prepositions: g.prepositions,
    };
    lexicon
        .validate()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let generation = GenerationConfig {
        lexicon,
        relations: r,
        require_unique: g.require_unique,
        max_per_object: g.max_per_object,
        shift_extent: g.shift_extent,
        master_seed,
    };

    let buffer = BufferConfig {
        capacity: file.buffer.capacity,
        gamma: file.buffer.gamma,
        seed: file.buffer.seed.unwrap_or(master_seed),
    };
    buffer
        .validate()
        .map_err(|e| CliError::Config(e.to_string()))?;

    let threshold = overrides.threshold.unwrap_or(file.eval.threshold);
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(CliError::Config(format!(
            "eval threshold {threshold} outside (0, 1)"
        )));
    }

    let mut checkpoints = overrides
        .checkpoints
        .clone()
        .unwrap_or(file.stream.checkpoints);
    checkpoints.sort_unstable();
    checkpoints.dedup();

    if file.analyze.bandwidth_factor.is_nan() || file.analyze.bandwidth_factor <= 0.0 {
        return Err(CliError::Config(
            "analyze.bandwidth_factor must be positive".into(),
        ));
    }
    if file.analyze.grid_points < 2 {
        return Err(CliError::Config(
            "analyze.grid_points must be at least 2".into(),
        ));
    }

    Ok(ResolvedConfig {
        master_seed,
        categories,
        attributes,
        generation,
        buffer,
        checkpoints,
        threshold,
        adapter_command: overrides.adapter.clone().or(file.adapter.command),
        adapter_timeout_secs: file.adapter.timeout_secs.unwrap_or(30),
        bandwidth_factor: file.analyze.bandwidth_factor,
        grid_points: file.analyze.grid_points,
    })
}
