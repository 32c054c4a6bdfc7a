//! Referring-expression templates and full pick/place instruction synthesis.
//!
//! Expressions are instantiated from a closed set of slot sequences over
//! attribute {a}, category {c}, relation {R}, image zone {b}, anchor
//! attribute {A}, and anchor category {C}:
//!
//! | template | sequences           | example                             |
//! |----------|---------------------|-------------------------------------|
//! | I        | a c                 | "wooden bowl"                       |
//! | II       | R c / c R           | "rightmost can", "can in front"     |
//! | III      | R a c / a c R       | "left yellow can"                   |
//! | IV       | c R A C / a c R A C | "can next to blue box"              |
//! | V        | c b / a c b         | "can on the top left of the table"  |
//!
//! A pick instruction is a pick verb plus an expression; a place instruction
//! is a place verb, a preposition, "the", and an expression, with the target
//! box translated in the preposition's direction.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::relations::{
    extract_relations, satisfiers, ComparisonClass, FeatureBundle, Relation, RelationConfig,
    RelationFeature, RelationPredicate,
};
use crate::scene::{BBox, DetectedObject, Scene, SceneError, Zone};
use crate::seed::object_stream_seed;

/// Table row identifying which slot sequence produced an expression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TemplateId {
    I,
    II,
    III,
    IV,
    V,
}

impl TemplateId {
    pub fn as_str(&self) -> &'static str {
        match self {
            TemplateId::I => "I",
            TemplateId::II => "II",
            TemplateId::III => "III",
            TemplateId::IV => "IV",
            TemplateId::V => "V",
        }
    }
}

/// One slot of an expression template.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Attribute,
    Category,
    Relation,
    AnchorAttribute,
    AnchorCategory,
    Zone,
}

/// A slot sequence from the template table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExpressionTemplate {
    pub id: TemplateId,
    pub slots: &'static [Slot],
}

/// The nine slot sequences: template I has one, templates II–V two each.
pub const TEMPLATES: [ExpressionTemplate; 9] = [
    ExpressionTemplate {
        id: TemplateId::I,
        slots: &[Slot::Attribute, Slot::Category],
    },
    ExpressionTemplate {
        id: TemplateId::II,
        slots: &[Slot::Relation, Slot::Category],
    },
    ExpressionTemplate {
        id: TemplateId::II,
        slots: &[Slot::Category, Slot::Relation],
    },
    ExpressionTemplate {
        id: TemplateId::III,
        slots: &[Slot::Relation, Slot::Attribute, Slot::Category],
    },
    ExpressionTemplate {
        id: TemplateId::III,
        slots: &[Slot::Attribute, Slot::Category, Slot::Relation],
    },
    ExpressionTemplate {
        id: TemplateId::IV,
        slots: &[
            Slot::Category,
            Slot::Relation,
            Slot::AnchorAttribute,
            Slot::AnchorCategory,
        ],
    },
    ExpressionTemplate {
        id: TemplateId::IV,
        slots: &[
            Slot::Attribute,
            Slot::Category,
            Slot::Relation,
            Slot::AnchorAttribute,
            Slot::AnchorCategory,
        ],
    },
    ExpressionTemplate {
        id: TemplateId::V,
        slots: &[Slot::Category, Slot::Zone],
    },
    ExpressionTemplate {
        id: TemplateId::V,
        slots: &[Slot::Attribute, Slot::Category, Slot::Zone],
    },
];

/// Pick or place.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Pick,
    Place,
}

/// The four placement prepositions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Preposition {
    #[serde(rename = "in front of")]
    InFrontOf,
    #[serde(rename = "in behind")]
    InBehind,
    #[serde(rename = "on the left side of")]
    OnLeftSideOf,
    #[serde(rename = "on the right side of")]
    OnRightSideOf,
}

impl Preposition {
    pub const ALL: [Preposition; 4] = [
        Preposition::InFrontOf,
        Preposition::InBehind,
        Preposition::OnLeftSideOf,
        Preposition::OnRightSideOf,
    ];

    pub fn token(&self) -> &'static str {
        match self {
            Preposition::InFrontOf => "in front of",
            Preposition::InBehind => "in behind",
            Preposition::OnLeftSideOf => "on the left side of",
            Preposition::OnRightSideOf => "on the right side of",
        }
    }

    pub fn from_token(token: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|p| p.token() == token)
    }

    /// Shift direction in image coordinates: front is +y, behind −y,
    /// left −x, right +x.
    fn shift_vector(&self, box_width: f64, box_height: f64, extent: f64) -> (f64, f64) {
        match self {
            Preposition::InFrontOf => (0.0, extent * box_height),
            Preposition::InBehind => (0.0, -extent * box_height),
            Preposition::OnLeftSideOf => (-extent * box_width, 0.0),
            Preposition::OnRightSideOf => (extent * box_width, 0.0),
        }
    }
}

/// Verb phrases and prepositions used to assemble full instructions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CommandLexicon {
    pub pick_terms: Vec<String>,
    pub place_terms: Vec<String>,
    pub prepositions: Vec<Preposition>,
}

impl Default for CommandLexicon {
    fn default() -> Self {
        Self {
            pick_terms: ["pick up the", "grasp the", "give me the"]
                .map(String::from)
                .to_vec(),
            place_terms: ["place it", "put it"].map(String::from).to_vec(),
            prepositions: Preposition::ALL.to_vec(),
        }
    }
}

impl CommandLexicon {
    pub fn validate(&self) -> Result<(), GenerationError> {
        if self.pick_terms.is_empty() || self.place_terms.is_empty() || self.prepositions.is_empty()
        {
            return Err(GenerationError::EmptyLexicon);
        }
        Ok(())
    }
}

/// One synthetic training instruction with its target box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstructionTriplet {
    pub scene_id: String,
    /// The source object the expression refers to.
    pub object_id: u32,
    pub kind: TaskKind,
    pub text: String,
    /// The object's box for pick; the preposition-shifted box for place.
    pub target_box: BBox,
    pub template_id: TemplateId,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub preposition: Option<Preposition>,
    /// Set when a place shift had to be clamped at the image boundary.
    #[serde(default)]
    pub clamped: bool,
}

/// Everything instruction synthesis needs besides the scene itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    pub lexicon: CommandLexicon,
    pub relations: RelationConfig,
    /// Keep only expressions that uniquely identify their source object.
    pub require_unique: bool,
    /// Cap on instructions per object per task kind; `None` emits all
    /// admissible combinations.
    pub max_per_object: Option<usize>,
    /// Place-shift magnitude in units of the box dimension.
    pub shift_extent: f64,
    pub master_seed: u64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            lexicon: CommandLexicon::default(),
            relations: RelationConfig::default(),
            require_unique: true,
            max_per_object: None,
            shift_extent: 1.0,
            master_seed: 0,
        }
    }
}

/// The values available to fill a template: at most one attribute, one
/// relation feature, and one zone. Anchor slots are resolved from the
/// relation's anchor object; `anchor_attribute` selects which of the
/// anchor's attributes fills {A} (default: its first).
#[derive(Debug, Clone, Copy, Default)]
pub struct FeatureChoice<'a> {
    pub attribute: Option<&'a str>,
    pub relation: Option<&'a RelationFeature>,
    pub zone: Option<Zone>,
    pub anchor_attribute: Option<&'a str>,
}

/// Instantiate one template over an object's features. Produces a lowercase
/// phrase whose words follow the template's slot sequence exactly.
pub fn realize_expression(
    object: &DetectedObject,
    choice: &FeatureChoice<'_>,
    template: &ExpressionTemplate,
    scene: &Scene,
) -> Result<String, GenerationError> {
    let anchor = match choice.relation.and_then(|f| f.anchor_id) {
        Some(id) => Some(scene.require_object(id)?),
        None => None,
    };
    let rel_idx = template.slots.iter().position(|s| *s == Slot::Relation);
    let cat_idx = template.slots.iter().position(|s| *s == Slot::Category);
    let mut words: Vec<&str> = Vec::with_capacity(template.slots.len());
    for slot in template.slots {
        let value: &str = match slot {
            Slot::Attribute => choice.attribute.ok_or(GenerationError::MissingSlot {
                template: template.id,
                slot: "attribute",
            })?,
            Slot::Category => &object.category,
            Slot::Relation => {
                let feature = choice.relation.ok_or(GenerationError::MissingSlot {
                    template: template.id,
                    slot: "relation",
                })?;
                let surface = if template.id == TemplateId::IV {
                    feature.relation.anchored_surface()
                } else if rel_idx < cat_idx {
                    feature.relation.prefix_surface()
                } else {
                    feature.relation.suffix_surface()
                };
                surface.ok_or(GenerationError::NoSurfaceForm {
                    relation: feature.relation,
                    template: template.id,
                })?
            }
            Slot::AnchorAttribute => {
                let anchor = anchor.ok_or(GenerationError::MissingSlot {
                    template: template.id,
                    slot: "anchor attribute",
                })?;
                match choice.anchor_attribute {
                    Some(a) => a,
                    None => anchor.attributes.first().map(String::as_str).ok_or(
                        GenerationError::MissingSlot {
                            template: template.id,
                            slot: "anchor attribute",
                        },
                    )?,
                }
            }
            Slot::AnchorCategory => {
                &anchor
                    .ok_or(GenerationError::MissingSlot {
                        template: template.id,
                        slot: "anchor category",
                    })?
                    .category
            }
            Slot::Zone => choice
                .zone
                .ok_or(GenerationError::MissingSlot {
                    template: template.id,
                    slot: "zone",
                })?
                .phrase(),
        };
        words.push(value);
    }
    Ok(words.join(" "))
}

/// Outcome of shifting a box for a place preposition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftedBox {
    pub bbox: BBox,
    /// The translation was reduced to keep the box inside the image.
    pub clamped: bool,
}

/// Translate a box by `extent_factor` box dimensions in the preposition's
/// direction, clamping the translation so the result stays inside the
/// image. Width and height are preserved.
pub fn shift_box_for_preposition(
    bbox: &BBox,
    preposition: Preposition,
    image_width: u32,
    image_height: u32,
    extent_factor: f64,
) -> Result<ShiftedBox, GenerationError> {
    let (w, h) = (f64::from(image_width), f64::from(image_height));
    if bbox.width() > w || bbox.height() > h {
        return Err(GenerationError::UnshiftableBox);
    }
    let (dx, dy) = preposition.shift_vector(bbox.width(), bbox.height(), extent_factor);
    let tx = dx.clamp(-bbox.x1, w - bbox.x2);
    let ty = dy.clamp(-bbox.y1, h - bbox.y2);
    Ok(ShiftedBox {
        bbox: BBox::new(bbox.x1 + tx, bbox.y1 + ty, bbox.x2 + tx, bbox.y2 + ty),
        clamped: tx != dx || ty != dy,
    })
}

/// A realized expression together with its semantic bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateExpression {
    pub text: String,
    pub template: TemplateId,
    pub bundle: FeatureBundle,
}

/// Attribute and category words that would collide with relation surface
/// forms in the grammar; they are never used to fill expression slots.
fn reserved_word(token: &str) -> bool {
    matches!(
        token,
        "left" | "right" | "leftmost" | "rightmost" | "frontmost" | "behindmost"
    )
}

fn surface_matches(template: &ExpressionTemplate, relation: Relation) -> bool {
    let rel_idx = template.slots.iter().position(|s| *s == Slot::Relation);
    let cat_idx = template.slots.iter().position(|s| *s == Slot::Category);
    match (rel_idx, cat_idx) {
        (Some(r), Some(c)) if r < c => relation.prefix_surface().is_some(),
        (Some(_), Some(_)) => relation.suffix_surface().is_some(),
        _ => false,
    }
}

/// Enumerate every admissible (template, feature) instantiation for object
/// `k`, deduplicated by text, in deterministic template-major order. With
/// `require_unique`, only expressions whose sole satisfier is `k` survive.
pub fn candidate_expressions(
    scene: &Scene,
    k: u32,
    config: &GenerationConfig,
) -> Result<Vec<CandidateExpression>, GenerationError> {
    let object = scene.require_object(k)?;
    if reserved_word(&object.category) {
        return Ok(Vec::new());
    }
    let features = extract_relations(scene, k, &config.relations)?;
    let attrs: Vec<&str> = object
        .attributes
        .iter()
        .map(String::as_str)
        .filter(|a| !reserved_word(a))
        .collect();
    let class_features: Vec<&RelationFeature> = features
        .iter()
        .filter(|f| f.comparison_class != ComparisonClass::NearbyObject)
        .collect();
    let anchored_features: Vec<&RelationFeature> = features
        .iter()
        .filter(|f| f.comparison_class == ComparisonClass::NearbyObject)
        .collect();

    let mut out: Vec<CandidateExpression> = Vec::new();
    let mut seen = BTreeSet::new();
    let mut push = |text: String, template: TemplateId, bundle: FeatureBundle| {
        if config.require_unique && satisfiers(scene, &bundle, &config.relations) != [k] {
            return;
        }
        if seen.insert(text.clone()) {
            out.push(CandidateExpression {
                text,
                template,
                bundle,
            });
        }
    };

    for template in &TEMPLATES {
        match template.id {
            TemplateId::I => {
                for a in &attrs {
                    let text = realize_expression(
                        object,
                        &FeatureChoice {
                            attribute: Some(a),
                            ..FeatureChoice::default()
                        },
                        template,
                        scene,
                    )?;
                    push(
                        text,
                        template.id,
                        FeatureBundle {
                            category: object.category.clone(),
                            attributes: alloc::vec![a.to_string()],
                            ..FeatureBundle::default()
                        },
                    );
                }
            }
            TemplateId::II => {
                // Type-(1) features only; attribute-bearing classes go to III.
                for feature in class_features
                    .iter()
                    .filter(|f| f.comparison_class == ComparisonClass::SameCategory)
                {
                    if !surface_matches(template, feature.relation) {
                        continue;
                    }
                    let text = realize_expression(
                        object,
                        &FeatureChoice {
                            relation: Some(feature),
                            ..FeatureChoice::default()
                        },
                        template,
                        scene,
                    )?;
                    push(
                        text,
                        template.id,
                        FeatureBundle {
                            category: object.category.clone(),
                            relations: alloc::vec![RelationPredicate::ClassRelative {
                                relation: feature.relation,
                                attribute: None,
                            }],
                            ..FeatureBundle::default()
                        },
                    );
                }
            }
            TemplateId::III => {
                // Type-(1) relations paired with any attribute of the object,
                // and type-(2) relations paired with their shared attribute.
                // Both read as "relation within the attribute-narrowed class".
                for feature in &class_features {
                    if !surface_matches(template, feature.relation) {
                        continue;
                    }
                    let choices: Vec<&str> = match &feature.comparison_class {
                        ComparisonClass::SameCategory => attrs.clone(),
                        ComparisonClass::SameCategoryAndAttribute { attribute } => {
                            if reserved_word(attribute) {
                                Vec::new()
                            } else {
                                alloc::vec![attribute.as_str()]
                            }
                        }
                        ComparisonClass::NearbyObject => Vec::new(),
                    };
                    for a in choices {
                        let text = realize_expression(
                            object,
                            &FeatureChoice {
                                attribute: Some(a),
                                relation: Some(feature),
                                ..FeatureChoice::default()
                            },
                            template,
                            scene,
                        )?;
                        push(
                            text,
                            template.id,
                            FeatureBundle {
                                category: object.category.clone(),
                                attributes: alloc::vec![a.to_string()],
                                relations: alloc::vec![RelationPredicate::ClassRelative {
                                    relation: feature.relation,
                                    attribute: Some(a.to_string()),
                                }],
                                ..FeatureBundle::default()
                            },
                        );
                    }
                }
            }
            TemplateId::IV => {
                for feature in &anchored_features {
                    let Some(anchor_id) = feature.anchor_id else {
                        continue;
                    };
                    let anchor = scene.require_object(anchor_id)?;
                    if reserved_word(&anchor.category) {
                        continue;
                    }
                    let has_own_attr = template.slots.contains(&Slot::Attribute);
                    let own_attrs: Vec<Option<&str>> = if has_own_attr {
                        attrs.iter().map(|a| Some(*a)).collect()
                    } else {
                        alloc::vec![None]
                    };
                    for aa in anchor
                        .attributes
                        .iter()
                        .map(String::as_str)
                        .filter(|a| !reserved_word(a))
                    {
                        for own in &own_attrs {
                            let text = realize_expression(
                                object,
                                &FeatureChoice {
                                    attribute: *own,
                                    relation: Some(feature),
                                    anchor_attribute: Some(aa),
                                    ..FeatureChoice::default()
                                },
                                template,
                                scene,
                            )?;
                            push(
                                text,
                                template.id,
                                FeatureBundle {
                                    category: object.category.clone(),
                                    attributes: own.iter().map(|a| a.to_string()).collect(),
                                    relations: alloc::vec![RelationPredicate::Anchored {
                                        relation: feature.relation,
                                        anchor_category: anchor.category.clone(),
                                        anchor_attribute: Some(aa.to_string()),
                                    }],
                                    ..FeatureBundle::default()
                                },
                            );
                        }
                    }
                }
            }
            TemplateId::V => {
                let (cx, cy) = object.bbox.center();
                let zone = Zone::of_point(cx, cy, scene.image_width, scene.image_height);
                let has_own_attr = template.slots.contains(&Slot::Attribute);
                let own_attrs: Vec<Option<&str>> = if has_own_attr {
                    attrs.iter().map(|a| Some(*a)).collect()
                } else {
                    alloc::vec![None]
                };
                for own in own_attrs {
                    let text = realize_expression(
                        object,
                        &FeatureChoice {
                            attribute: own,
                            zone: Some(zone),
                            ..FeatureChoice::default()
                        },
                        template,
                        scene,
                    )?;
                    push(
                        text,
                        template.id,
                        FeatureBundle {
                            category: object.category.clone(),
                            attributes: own.iter().map(|a| a.to_string()).collect(),
                            zone: Some(zone),
                            ..FeatureBundle::default()
                        },
                    );
                }
            }
        }
    }
    Ok(out)
}

fn subsample<T>(items: Vec<T>, cap: Option<usize>, seed: u64) -> Vec<T> {
    let Some(cap) = cap else { return items };
    if items.len() <= cap {
        return items;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices = rand::seq::index::sample(&mut rng, items.len(), cap).into_vec();
    indices.sort_unstable();
    let mut slots: Vec<Option<T>> = items.into_iter().map(Some).collect();
    indices
        .into_iter()
        .map(|i| slots[i].take().expect("sampled indices are distinct"))
        .collect()
}

/// Generate the pick instruction set for object `k`.
pub fn generate_pick_instructions(
    scene: &Scene,
    k: u32,
    config: &GenerationConfig,
) -> Result<Vec<InstructionTriplet>, GenerationError> {
    config.lexicon.validate()?;
    let object = scene.require_object(k)?;
    let expressions = candidate_expressions(scene, k, config)?;
    let seed = object_stream_seed(config.master_seed, &scene.scene_id, k, 0);
    let kept = subsample(expressions, config.max_per_object, seed);
    let verbs = &config.lexicon.pick_terms;
    Ok(kept
        .into_iter()
        .enumerate()
        .map(|(i, expr)| InstructionTriplet {
            scene_id: scene.scene_id.clone(),
            object_id: k,
            kind: TaskKind::Pick,
            text: format!("{} {}", verbs[i % verbs.len()], expr.text),
            target_box: object.bbox,
            template_id: expr.template,
            preposition: None,
            clamped: false,
        })
        .collect())
}

/// Generate the place instruction set for object `k`: every preposition
/// crossed with every kept expression, with the target box shifted in the
/// preposition's direction. Prepositions whose shift is impossible are
/// skipped.
pub fn generate_place_instructions(
    scene: &Scene,
    k: u32,
    config: &GenerationConfig,
) -> Result<Vec<InstructionTriplet>, GenerationError> {
    config.lexicon.validate()?;
    let object = scene.require_object(k)?;
    let expressions = candidate_expressions(scene, k, config)?;
    let verbs = &config.lexicon.place_terms;
    let mut triplets = Vec::new();
    let mut index = 0usize;
    for expr in &expressions {
        for &prep in &config.lexicon.prepositions {
            let shifted = match shift_box_for_preposition(
                &object.bbox,
                prep,
                scene.image_width,
                scene.image_height,
                config.shift_extent,
            ) {
                Ok(s) => s,
                Err(GenerationError::UnshiftableBox) => continue,
                Err(e) => return Err(e),
            };
            triplets.push(InstructionTriplet {
                scene_id: scene.scene_id.clone(),
                object_id: k,
                kind: TaskKind::Place,
                text: format!(
                    "{} {} the {}",
                    verbs[index % verbs.len()],
                    prep.token(),
                    expr.text
                ),
                target_box: shifted.bbox,
                template_id: expr.template,
                preposition: Some(prep),
                clamped: shifted.clamped,
            });
            index += 1;
        }
    }
    let seed = object_stream_seed(config.master_seed, &scene.scene_id, k, 1);
    Ok(subsample(triplets, config.max_per_object, seed))
}

/// Pick and place instruction sets for every object of a scene.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SceneInstructions {
    pub picks: Vec<InstructionTriplet>,
    pub places: Vec<InstructionTriplet>,
}

/// Generate instructions for all K objects, in object order.
pub fn generate_scene_instructions(
    scene: &Scene,
    config: &GenerationConfig,
) -> Result<SceneInstructions, GenerationError> {
    let mut out = SceneInstructions::default();
    for object in &scene.objects {
        out.picks
            .extend(generate_pick_instructions(scene, object.id, config)?);
        out.places
            .extend(generate_place_instructions(scene, object.id, config)?);
    }
    Ok(out)
}

/// Errors raised during expression realization and instruction synthesis.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GenerationError {
    #[error("template {template:?} requires a {slot} value")]
    MissingSlot {
        template: TemplateId,
        slot: &'static str,
    },
    #[error("relation `{}` has no surface form in template {template:?}", relation.token())]
    NoSurfaceForm {
        relation: Relation,
        template: TemplateId,
    },
    #[error("box too large to shift inside the image")]
    UnshiftableBox,
    #[error("lexicon must declare at least one pick term, place term, and preposition")]
    EmptyLexicon,
    #[error(transparent)]
    Scene(#[from] SceneError),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{obj, scene};
    use alloc::vec;

    fn config() -> GenerationConfig {
        GenerationConfig::default()
    }

    #[test]
    fn template_table_has_nine_sequences() {
        assert_eq!(TEMPLATES.len(), 9);
        let per_id = |id: TemplateId| TEMPLATES.iter().filter(|t| t.id == id).count();
        assert_eq!(per_id(TemplateId::I), 1);
        for id in [
            TemplateId::II,
            TemplateId::III,
            TemplateId::IV,
            TemplateId::V,
        ] {
            assert_eq!(per_id(id), 2);
        }
    }

    #[test]
    fn realize_wooden_bowl() {
        let s = scene(
            640,
            480,
            vec![obj(0, "bowl", &["wooden"], [10.0, 10.0, 60.0, 60.0])],
        );
        let text = realize_expression(
            &s.objects[0],
            &FeatureChoice {
                attribute: Some("wooden"),
                ..FeatureChoice::default()
            },
            &TEMPLATES[0],
            &s,
        )
        .unwrap();
        assert_eq!(text, "wooden bowl");
    }

    #[test]
    fn realize_rightmost_can() {
        let s = scene(640, 480, vec![obj(0, "can", &[], [10.0, 10.0, 60.0, 60.0])]);
        let feature = RelationFeature {
            subject_id: 0,
            relation: Relation::Rightmost,
            comparison_class: ComparisonClass::SameCategory,
            anchor_id: None,
        };
        let text = realize_expression(
            &s.objects[0],
            &FeatureChoice {
                relation: Some(&feature),
                ..FeatureChoice::default()
            },
            &TEMPLATES[1],
            &s,
        )
        .unwrap();
        assert_eq!(text, "rightmost can");
    }

    #[test]
    fn realize_anchored_template_iv() {
        let s = scene(
            640,
            480,
            vec![
                obj(0, "can", &["yellow"], [100.0, 100.0, 150.0, 150.0]),
                obj(1, "box", &["blue"], [40.0, 100.0, 90.0, 150.0]),
            ],
        );
        let feature = RelationFeature {
            subject_id: 0,
            relation: Relation::Right,
            comparison_class: ComparisonClass::NearbyObject,
            anchor_id: Some(1),
        };
        let text = realize_expression(
            &s.objects[0],
            &FeatureChoice {
                attribute: Some("yellow"),
                relation: Some(&feature),
                ..FeatureChoice::default()
            },
            &TEMPLATES[6],
            &s,
        )
        .unwrap();
        assert_eq!(text, "yellow can on the right of blue box");
    }

    #[test]
    fn missing_slot_is_an_error() {
        let s = scene(
            640,
            480,
            vec![obj(0, "bowl", &[], [10.0, 10.0, 60.0, 60.0])],
        );
        let err = realize_expression(&s.objects[0], &FeatureChoice::default(), &TEMPLATES[0], &s)
            .unwrap_err();
        assert!(matches!(err, GenerationError::MissingSlot { .. }));
    }

    #[test]
    fn shift_left_moves_one_box_width() {
        let shifted = shift_box_for_preposition(
            &BBox::new(100.0, 100.0, 140.0, 160.0),
            Preposition::OnLeftSideOf,
            640,
            480,
            1.0,
        )
        .unwrap();
        assert_eq!(shifted.bbox, BBox::new(60.0, 100.0, 100.0, 160.0));
        assert!(!shifted.clamped);
    }

    #[test]
    fn shift_zero_extent_is_identity() {
        let b = BBox::new(5.0, 6.0, 25.0, 30.0);
        let shifted = shift_box_for_preposition(&b, Preposition::InFrontOf, 640, 480, 0.0).unwrap();
        assert_eq!(shifted.bbox, b);
        assert!(!shifted.clamped);
    }

    #[test]
    fn shift_at_edge_clamps_and_flags() {
        let b = BBox::new(0.0, 100.0, 40.0, 160.0);
        let shifted =
            shift_box_for_preposition(&b, Preposition::OnLeftSideOf, 640, 480, 1.0).unwrap();
        assert_eq!(shifted.bbox, b);
        assert!(shifted.clamped);
    }

    #[test]
    fn shift_preserves_dimensions() {
        let b = BBox::new(600.0, 100.0, 639.0, 160.0);
        let shifted =
            shift_box_for_preposition(&b, Preposition::OnRightSideOf, 640, 480, 1.0).unwrap();
        assert!(shifted.clamped);
        assert_eq!(shifted.bbox.width(), b.width());
        assert_eq!(shifted.bbox.height(), b.height());
    }

    #[test]
    fn oversized_box_is_unshiftable() {
        let b = BBox::new(0.0, 0.0, 700.0, 100.0);
        let err = shift_box_for_preposition(&b, Preposition::InFrontOf, 640, 480, 1.0).unwrap_err();
        assert_eq!(err, GenerationError::UnshiftableBox);
    }

    #[test]
    fn pick_contains_yellow_cup_in_behind() {
        let s = scene(
            640,
            480,
            vec![
                obj(0, "cup", &["yellow"], [100.0, 50.0, 160.0, 110.0]),
                obj(1, "cup", &["yellow"], [100.0, 300.0, 160.0, 360.0]),
            ],
        );
        let picks = generate_pick_instructions(&s, 0, &config()).unwrap();
        let texts: Vec<&str> = picks.iter().map(|t| t.text.as_str()).collect();
        assert!(
            texts.contains(&"pick up the yellow cup in behind"),
            "got {texts:?}"
        );
        for t in &picks {
            assert_eq!(t.target_box, s.objects[0].bbox);
            assert!(t.preposition.is_none());
        }
    }

    #[test]
    fn single_wooden_bowl_gets_template_i_and_zone_variant() {
        let s = scene(
            640,
            480,
            vec![obj(0, "bowl", &["wooden"], [10.0, 10.0, 60.0, 60.0])],
        );
        let picks = generate_pick_instructions(&s, 0, &config()).unwrap();
        let texts: Vec<&str> = picks.iter().map(|t| t.text.as_str()).collect();
        assert!(texts.contains(&"pick up the wooden bowl"), "got {texts:?}");
        assert!(
            picks.iter().any(|t| t.template_id == TemplateId::V
                && t.text.ends_with("on the top left of the table")),
            "got {texts:?}"
        );
    }

    #[test]
    fn indistinguishable_objects_generate_nothing_when_unique_required() {
        // Same category, same attributes, centers 2 px apart: every
        // candidate expression has two satisfiers.
        let s = scene(
            640,
            480,
            vec![
                obj(0, "cup", &["red"], [100.0, 100.0, 140.0, 140.0]),
                obj(1, "cup", &["red"], [102.0, 100.0, 142.0, 140.0]),
            ],
        );
        assert!(generate_pick_instructions(&s, 0, &config())
            .unwrap()
            .is_empty());
        assert!(generate_place_instructions(&s, 0, &config())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn require_unique_off_reproduces_raw_generation() {
        let s = scene(
            640,
            480,
            vec![
                obj(0, "cup", &["red"], [100.0, 100.0, 140.0, 140.0]),
                obj(1, "cup", &["red"], [102.0, 100.0, 142.0, 140.0]),
            ],
        );
        let raw = GenerationConfig {
            require_unique: false,
            ..config()
        };
        assert!(!generate_pick_instructions(&s, 0, &raw).unwrap().is_empty());
    }

    #[test]
    fn place_count_is_prepositions_times_expressions() {
        let s = scene(
            640,
            480,
            vec![
                obj(0, "cup", &["yellow"], [300.0, 200.0, 340.0, 240.0]),
                obj(1, "ball", &["blue"], [350.0, 200.0, 390.0, 240.0]),
            ],
        );
        let exprs = candidate_expressions(&s, 0, &config()).unwrap();
        let places = generate_place_instructions(&s, 0, &config()).unwrap();
        assert!(!exprs.is_empty());
        assert_eq!(places.len(), 4 * exprs.len());
    }

    #[test]
    fn place_next_to_assembly_and_shift() {
        let s = scene(
            640,
            480,
            vec![
                obj(0, "cup", &["yellow"], [300.0, 200.0, 340.0, 240.0]),
                obj(1, "ball", &["blue"], [350.0, 200.0, 390.0, 240.0]),
            ],
        );
        let places = generate_place_instructions(&s, 0, &config()).unwrap();
        let hit = places
            .iter()
            .find(|t| {
                t.text
                    .ends_with("in front of the yellow cup next to blue ball")
            })
            .expect("expected anchored place instruction");
        // Shifted one box height toward the camera (+y).
        assert_eq!(hit.target_box, BBox::new(300.0, 240.0, 340.0, 280.0));
        assert_eq!(hit.preposition, Some(Preposition::InFrontOf));
        assert_eq!(hit.kind, TaskKind::Place);
        // Place boxes keep the source box dimensions.
        for t in &places {
            assert_eq!(t.target_box.width(), s.objects[0].bbox.width());
            assert_eq!(t.target_box.height(), s.objects[0].bbox.height());
        }
    }

    #[test]
    fn scene_generation_covers_all_objects() {
        let s = scene(
            640,
            480,
            vec![
                obj(0, "cup", &["yellow"], [100.0, 100.0, 150.0, 150.0]),
                obj(1, "ball", &["blue"], [400.0, 100.0, 450.0, 150.0]),
                obj(2, "bowl", &["wooden"], [250.0, 300.0, 320.0, 370.0]),
            ],
        );
        let all = generate_scene_instructions(&s, &config()).unwrap();
        for id in [0, 1, 2] {
            assert!(all.picks.iter().any(|t| t.object_id == id));
            assert!(all.places.iter().any(|t| t.object_id == id));
        }
    }

    #[test]
    fn generation_is_deterministic_and_texts_distinct() {
        let s = scene(
            640,
            480,
            vec![
                obj(0, "cup", &["yellow", "metal"], [100.0, 100.0, 150.0, 150.0]),
                obj(1, "cup", &["blue"], [400.0, 100.0, 450.0, 150.0]),
                obj(2, "ball", &["blue"], [160.0, 100.0, 200.0, 140.0]),
            ],
        );
        let a = generate_scene_instructions(&s, &config()).unwrap();
        let b = generate_scene_instructions(&s, &config()).unwrap();
        assert_eq!(a, b);
        let mut texts: Vec<&str> = a.picks.iter().map(|t| t.text.as_str()).collect();
        let n = texts.len();
        texts.sort_unstable();
        texts.dedup();
        assert_eq!(n, texts.len());
    }

    #[test]
    fn max_per_object_caps_with_seeded_subsample() {
        let s = scene(
            640,
            480,
            vec![
                obj(0, "cup", &["yellow", "metal"], [100.0, 100.0, 150.0, 150.0]),
                obj(1, "cup", &["blue"], [400.0, 100.0, 450.0, 150.0]),
                obj(2, "ball", &["blue"], [160.0, 100.0, 200.0, 140.0]),
            ],
        );
        let capped = GenerationConfig {
            max_per_object: Some(2),
            ..config()
        };
        let picks = generate_pick_instructions(&s, 0, &capped).unwrap();
        assert_eq!(picks.len(), 2);
        assert_eq!(picks, generate_pick_instructions(&s, 0, &capped).unwrap());
        // The capped texts are a subsequence of the full expression list.
        let full = candidate_expressions(&s, 0, &config()).unwrap();
        let positions: Vec<usize> = picks
            .iter()
            .map(|t| {
                full.iter()
                    .position(|e| t.text.ends_with(&e.text))
                    .expect("capped output drawn from full output")
            })
            .collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]));
    }
}
