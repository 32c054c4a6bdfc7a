//! Instruction parsing and grounding.
//!
//! [`parse_instruction`] inverts the expression grammar: longest-match
//! tokenization against the command lexicon, vocabularies, relation surface
//! forms, and zone phrases, trying templates most-specific-first
//! (IV > III > II > V > I, with a bare-category fallback for inputs like
//! "pick up the bowl" that name an object without any feature).
//!
//! [`LexicalGrounder`] resolves parsed instructions against a scene with the
//! same geometry predicates used at generation time, so every uniquely
//! generated pick instruction grounds back to its source box.
//!
//! [`ExternalGrounder`] is the boundary where learned models plug in; the
//! wire transport lives in the companion IO crate.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::instruction::{
    shift_box_for_preposition, CommandLexicon, GenerationError, Preposition, Slot, TaskKind,
    TemplateId, TEMPLATES,
};
use crate::relations::{satisfies, FeatureBundle, Relation, RelationConfig, RelationPredicate};
use crate::scene::{BBox, Scene, Vocabulary, Zone};

/// A grounding request: scene, instruction, and task kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingQuery {
    pub scene: Scene,
    pub instruction: String,
    pub kind: TaskKind,
}

/// A grounding answer: the predicted box with a confidence in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingResult {
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub confidence: f64,
    /// Which detected object the box belongs to, when known (lexical path).
    pub resolved_object_id: Option<u32>,
    /// The box was adjusted to stay inside the image.
    #[serde(default)]
    pub clamped: bool,
}

/// Structured slots recovered from one instruction.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParsedExpression {
    pub attribute: Option<String>,
    pub category: String,
    pub relation: Option<Relation>,
    pub anchor_attribute: Option<String>,
    pub anchor_category: Option<String>,
    pub zone: Option<Zone>,
}

/// A fully parsed instruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedInstruction {
    pub verb_phrase: String,
    pub kind: TaskKind,
    /// Present exactly for place instructions.
    pub preposition: Option<Preposition>,
    pub expression: ParsedExpression,
    /// `None` for the bare-category fallback, which is accepted on input
    /// but never generated.
    pub template_id: Option<TemplateId>,
}

/// Template try-order: most specific reading first.
const PARSE_ORDER: [usize; 9] = [6, 5, 3, 4, 1, 2, 8, 7, 0];

fn match_phrase(words: &[&str], pos: usize, phrase: &str) -> Option<usize> {
    let mut p = pos;
    for w in phrase.split_whitespace() {
        if words.get(p).copied() != Some(w) {
            return None;
        }
        p += 1;
    }
    Some(p)
}

/// Longest vocabulary token starting at `pos`.
fn match_vocab(words: &[&str], pos: usize, vocab: &Vocabulary) -> Option<(String, usize)> {
    let max = vocab.max_words().min(words.len() - pos);
    for len in (1..=max).rev() {
        let candidate = words[pos..pos + len].join(" ");
        if vocab.contains(&candidate) {
            return Some((candidate, pos + len));
        }
    }
    None
}

fn match_relation(
    words: &[&str],
    pos: usize,
    surfaces: &[(Relation, &str)],
) -> Option<(Relation, usize)> {
    // Surfaces are listed longest-first per set.
    for (relation, surface) in surfaces {
        if let Some(next) = match_phrase(words, pos, surface) {
            return Some((*relation, next));
        }
    }
    None
}

const PREFIX_SURFACES: [(Relation, &str); 6] = [
    (Relation::Leftmost, "leftmost"),
    (Relation::Rightmost, "rightmost"),
    (Relation::Frontmost, "frontmost"),
    (Relation::Behindmost, "behindmost"),
    (Relation::Left, "left"),
    (Relation::Right, "right"),
];

const SUFFIX_SURFACES: [(Relation, &str); 2] = [
    (Relation::InFront, "in front"),
    (Relation::InBehind, "in behind"),
];

const ANCHORED_SURFACES: [(Relation, &str); 5] = [
    (Relation::Left, "on the left of"),
    (Relation::Right, "on the right of"),
    (Relation::InFront, "in front of"),
    (Relation::InBehind, "in behind"),
    (Relation::NextTo, "next to"),
];

fn match_zone(words: &[&str], pos: usize) -> Option<(Zone, usize)> {
    let mut phrases: Vec<&'static str> = Zone::PHRASES.to_vec();
    phrases.sort_by_key(|p| core::cmp::Reverse(p.split_whitespace().count()));
    for phrase in phrases {
        if let Some(next) = match_phrase(words, pos, phrase) {
            return Some((Zone::from_phrase(phrase).expect("known phrase"), next));
        }
    }
    None
}

fn try_template(
    words: &[&str],
    template_index: usize,
    categories: &Vocabulary,
    attributes: &Vocabulary,
) -> Option<ParsedExpression> {
    let template = &TEMPLATES[template_index];
    let rel_idx = template.slots.iter().position(|s| *s == Slot::Relation);
    let cat_idx = template.slots.iter().position(|s| *s == Slot::Category);
    let mut expr = ParsedExpression::default();
    let mut pos = 0;
    for slot in template.slots {
        match slot {
            Slot::Attribute => {
                let (token, next) = match_vocab(words, pos, attributes)?;
                expr.attribute = Some(token);
                pos = next;
            }
            Slot::Category => {
                let (token, next) = match_vocab(words, pos, categories)?;
                expr.category = token;
                pos = next;
            }
            Slot::Relation => {
                let surfaces: &[(Relation, &str)] = if template.id == TemplateId::IV {
                    &ANCHORED_SURFACES
                } else if rel_idx < cat_idx {
                    &PREFIX_SURFACES
                } else {
                    &SUFFIX_SURFACES
                };
                let (relation, next) = match_relation(words, pos, surfaces)?;
                expr.relation = Some(relation);
                pos = next;
            }
            Slot::AnchorAttribute => {
                let (token, next) = match_vocab(words, pos, attributes)?;
                expr.anchor_attribute = Some(token);
                pos = next;
            }
            Slot::AnchorCategory => {
                let (token, next) = match_vocab(words, pos, categories)?;
                expr.anchor_category = Some(token);
                pos = next;
            }
            Slot::Zone => {
                let (zone, next) = match_zone(words, pos)?;
                expr.zone = Some(zone);
                pos = next;
            }
        }
    }
    (pos == words.len()).then_some(expr)
}

/// Parse one instruction against the lexicon and vocabularies.
pub fn parse_instruction(
    text: &str,
    lexicon: &CommandLexicon,
    categories: &Vocabulary,
    attributes: &Vocabulary,
) -> Result<ParsedInstruction, GroundingError> {
    let normalized = text.to_lowercase();
    let words: Vec<&str> = normalized.split_whitespace().collect();
    if words.is_empty() {
        return Err(GroundingError::Unparseable("empty instruction".to_string()));
    }

    // Longest verb phrase over both lexicons.
    let mut verb: Option<(TaskKind, &str, usize)> = None;
    for (kind, terms) in [
        (TaskKind::Pick, &lexicon.pick_terms),
        (TaskKind::Place, &lexicon.place_terms),
    ] {
        for term in terms {
            if let Some(next) = match_phrase(&words, 0, term) {
                if verb.is_none_or(|(_, _, best)| next > best) {
                    verb = Some((kind, term, next));
                }
            }
        }
    }
    let Some((kind, verb_phrase, mut pos)) = verb else {
        return Err(GroundingError::Unparseable(format!(
            "no command verb matches `{text}`"
        )));
    };

    let mut preposition = None;
    if kind == TaskKind::Place {
        let mut preps: Vec<Preposition> = Preposition::ALL.to_vec();
        preps.sort_by_key(|p| core::cmp::Reverse(p.token().split_whitespace().count()));
        for p in preps {
            if let Some(next) = match_phrase(&words, pos, p.token()) {
                preposition = Some(p);
                pos = next;
                break;
            }
        }
        if preposition.is_none() {
            return Err(GroundingError::Unparseable(
                "place instruction without a known preposition".to_string(),
            ));
        }
        pos = match_phrase(&words, pos, "the").ok_or_else(|| {
            GroundingError::Unparseable("expected `the` after the preposition".to_string())
        })?;
    }

    let rest = &words[pos..];
    if rest.is_empty() {
        return Err(GroundingError::Unparseable(
            "instruction names no object".to_string(),
        ));
    }
    for index in PARSE_ORDER {
        if let Some(expression) = try_template(rest, index, categories, attributes) {
            return Ok(ParsedInstruction {
                verb_phrase: verb_phrase.to_string(),
                kind,
                preposition,
                expression,
                template_id: Some(TEMPLATES[index].id),
            });
        }
    }
    // Bare category, outside the template table.
    if let Some((category, next)) = match_vocab(rest, 0, categories) {
        if next == rest.len() {
            return Ok(ParsedInstruction {
                verb_phrase: verb_phrase.to_string(),
                kind,
                preposition,
                expression: ParsedExpression {
                    category,
                    ..ParsedExpression::default()
                },
                template_id: None,
            });
        }
    }
    Err(GroundingError::Unparseable(format!(
        "no template matches `{text}`"
    )))
}

/// The semantic bundle an expression's slots denote.
fn bundle_of(expr: &ParsedExpression) -> FeatureBundle {
    let mut bundle = FeatureBundle {
        category: expr.category.clone(),
        attributes: expr.attribute.iter().cloned().collect(),
        relations: Vec::new(),
        zone: expr.zone,
    };
    if let Some(relation) = expr.relation {
        let predicate = match &expr.anchor_category {
            Some(anchor_category) => RelationPredicate::Anchored {
                relation,
                anchor_category: anchor_category.clone(),
                anchor_attribute: expr.anchor_attribute.clone(),
            },
            None => RelationPredicate::ClassRelative {
                relation,
                attribute: expr.attribute.clone(),
            },
        };
        bundle.relations.push(predicate);
    }
    bundle
}

/// Baseline grounder: parse, filter by category, then score the remaining
/// slots. Deterministic; ties break toward the lowest object id.
#[derive(Debug, Clone)]
pub struct LexicalGrounder<'a> {
    lexicon: &'a CommandLexicon,
    categories: &'a Vocabulary,
    attributes: &'a Vocabulary,
    relations: RelationConfig,
    shift_extent: f64,
}

impl<'a> LexicalGrounder<'a> {
    pub fn new(
        lexicon: &'a CommandLexicon,
        categories: &'a Vocabulary,
        attributes: &'a Vocabulary,
    ) -> Self {
        Self {
            lexicon,
            categories,
            attributes,
            relations: RelationConfig::default(),
            shift_extent: 1.0,
        }
    }

    pub fn with_relations(mut self, relations: RelationConfig) -> Self {
        self.relations = relations;
        self
    }

    pub fn with_shift_extent(mut self, extent: f64) -> Self {
        self.shift_extent = extent;
        self
    }

    pub fn parse(&self, text: &str) -> Result<ParsedInstruction, GroundingError> {
        parse_instruction(text, self.lexicon, self.categories, self.attributes)
    }

    /// Ground a query. Picks return the winning object's box; places ground
    /// the reference expression, then shift its box by the preposition.
    pub fn ground(&self, query: &GroundingQuery) -> Result<GroundingResult, GroundingError> {
        if query.instruction.trim().is_empty() {
            // Unconditioned prediction: a lexical grounder has nothing to go on.
            return Err(GroundingError::NoCandidate {
                category: String::new(),
            });
        }
        let parsed = self.parse(&query.instruction)?;
        let scene = &query.scene;
        let bundle = bundle_of(&parsed.expression);

        let candidates: Vec<_> = scene
            .objects
            .iter()
            .filter(|o| o.category == bundle.category)
            .collect();
        if candidates.is_empty() {
            return Err(GroundingError::NoCandidate {
                category: bundle.category,
            });
        }

        // Unmatched-slot count per candidate over the non-category slots.
        let score = |object: &crate::scene::DetectedObject| -> usize {
            let mut unmatched = 0;
            if !bundle.attributes.is_empty() {
                let only = FeatureBundle {
                    category: bundle.category.clone(),
                    attributes: bundle.attributes.clone(),
                    ..FeatureBundle::default()
                };
                if !satisfies(scene, object, &only, &self.relations) {
                    unmatched += 1;
                }
            }
            if !bundle.relations.is_empty() {
                // Relation predicates carry their own class-narrowing
                // attribute, so the slot is scored independently.
                let rel_only = FeatureBundle {
                    category: bundle.category.clone(),
                    relations: bundle.relations.clone(),
                    ..FeatureBundle::default()
                };
                if !satisfies(scene, object, &rel_only, &self.relations) {
                    unmatched += 1;
                }
            }
            if let Some(zone) = bundle.zone {
                let (cx, cy) = object.bbox.center();
                if !zone.contains_point(cx, cy, scene.image_width, scene.image_height) {
                    unmatched += 1;
                }
            }
            unmatched
        };

        let scored: Vec<(usize, &crate::scene::DetectedObject)> =
            candidates.into_iter().map(|o| (score(o), o)).collect();
        let best = scored.iter().map(|(s, _)| *s).min().expect("non-empty");
        let satisfier_ids: Vec<u32> = scored
            .iter()
            .filter(|(s, _)| *s == best)
            .map(|(_, o)| o.id)
            .collect();
        let winner_id = *satisfier_ids.iter().min().expect("non-empty");
        let winner = scene.object(winner_id).expect("candidate came from scene");
        let confidence = 1.0 / satisfier_ids.len() as f64;

        match parsed.kind {
            TaskKind::Pick => Ok(GroundingResult {
                bbox: winner.bbox,
                confidence,
                resolved_object_id: Some(winner_id),
                clamped: false,
            }),
            TaskKind::Place => {
                let preposition = parsed.preposition.ok_or_else(|| {
                    GroundingError::Unparseable("place instruction without preposition".to_string())
                })?;
                let shifted = shift_box_for_preposition(
                    &winner.bbox,
                    preposition,
                    scene.image_width,
                    scene.image_height,
                    self.shift_extent,
                )
                .map_err(|e| match e {
                    GenerationError::UnshiftableBox => GroundingError::UnshiftableBox,
                    other => GroundingError::Unparseable(other.to_string()),
                })?;
                Ok(GroundingResult {
                    bbox: shifted.bbox,
                    confidence,
                    resolved_object_id: Some(winner_id),
                    clamped: shifted.clamped,
                })
            }
        }
    }
}

/// Raw answer from an external grounding model, before validation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdapterResponse {
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub confidence: f64,
}

/// Failures of the external-grounder transport.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AdapterError {
    #[error("adapter timed out")]
    Timeout,
    #[error("malformed adapter response: {0}")]
    Malformed(String),
    #[error("adapter io error: {0}")]
    Io(String),
}

/// Where learned grounding models plug in. One request in flight per
/// adapter; implementations own the transport.
pub trait ExternalGrounder {
    fn ground(&mut self, query: &GroundingQuery) -> Result<AdapterResponse, AdapterError>;
}

/// Query an external grounder and validate its answer against the scene
/// bounds: out-of-bounds boxes are clamped and flagged, boxes with no
/// in-image area are rejected as malformed.
pub fn ground_external(
    query: &GroundingQuery,
    adapter: &mut dyn ExternalGrounder,
) -> Result<GroundingResult, GroundingError> {
    let response = adapter.ground(query).map_err(GroundingError::Adapter)?;
    let b = response.bbox;
    let coords = [b.x1, b.y1, b.x2, b.y2];
    if coords.iter().any(|c| !c.is_finite()) || !response.confidence.is_finite() {
        return Err(GroundingError::Adapter(AdapterError::Malformed(
            "non-finite value in response".to_string(),
        )));
    }
    if !b.is_valid() {
        return Err(GroundingError::Adapter(AdapterError::Malformed(
            "degenerate box".to_string(),
        )));
    }
    let (w, h) = (
        f64::from(query.scene.image_width),
        f64::from(query.scene.image_height),
    );
    let clamped_box = BBox::new(
        b.x1.clamp(0.0, w),
        b.y1.clamp(0.0, h),
        b.x2.clamp(0.0, w),
        b.y2.clamp(0.0, h),
    );
    if !clamped_box.is_valid() {
        return Err(GroundingError::Adapter(AdapterError::Malformed(
            "box lies entirely outside the image".to_string(),
        )));
    }
    Ok(GroundingResult {
        bbox: clamped_box,
        confidence: response.confidence.clamp(0.0, 1.0),
        resolved_object_id: None,
        clamped: clamped_box != b,
    })
}

/// Errors raised while parsing or grounding an instruction.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GroundingError {
    #[error("unparseable instruction: {0}")]
    Unparseable(String),
    #[error("no object of category `{category}` in scene")]
    NoCandidate { category: String },
    #[error("reference box too large to shift inside the image")]
    UnshiftableBox,
    #[error(transparent)]
    Adapter(#[from] AdapterError),
}
