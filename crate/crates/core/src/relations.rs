//! Spatial-relation heuristics over box centers.
//!
//! For a subject object the extractor emits three kinds of relational
//! features, each relative to a comparison class:
//!
//! 1. against objects of the same category,
//! 2. against objects of the same category sharing an attribute,
//! 3. against nearby anchor objects of any category.
//!
//! Geometry is center-point comparison with per-axis margins; ties within a
//! margin emit nothing, so a feature is only produced when it is
//! unambiguous. Larger image y means nearer the camera ("in front") unless
//! `flip_front_axis` is set.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::scene::{nearby, DetectedObject, Scene, SceneError, Zone};

/// Closed relation vocabulary: five pairwise tokens and four superlatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "left")]
    Left,
    #[serde(rename = "right")]
    Right,
    #[serde(rename = "in front")]
    InFront,
    #[serde(rename = "in behind")]
    InBehind,
    #[serde(rename = "next to")]
    NextTo,
    #[serde(rename = "leftmost")]
    Leftmost,
    #[serde(rename = "rightmost")]
    Rightmost,
    #[serde(rename = "frontmost")]
    Frontmost,
    #[serde(rename = "behindmost")]
    Behindmost,
}

impl Relation {
    pub const PAIRWISE: [Relation; 5] = [
        Relation::Left,
        Relation::Right,
        Relation::InFront,
        Relation::InBehind,
        Relation::NextTo,
    ];

    pub const SUPERLATIVE: [Relation; 4] = [
        Relation::Leftmost,
        Relation::Rightmost,
        Relation::Frontmost,
        Relation::Behindmost,
    ];

    pub fn token(&self) -> &'static str {
        match self {
            Relation::Left => "left",
            Relation::Right => "right",
            Relation::InFront => "in front",
            Relation::InBehind => "in behind",
            Relation::NextTo => "next to",
            Relation::Leftmost => "leftmost",
            Relation::Rightmost => "rightmost",
            Relation::Frontmost => "frontmost",
            Relation::Behindmost => "behindmost",
        }
    }

    pub fn is_superlative(&self) -> bool {
        matches!(
            self,
            Relation::Leftmost | Relation::Rightmost | Relation::Frontmost | Relation::Behindmost
        )
    }

    /// Surface form before the category ("rightmost can", "left yellow can").
    pub(crate) fn prefix_surface(&self) -> Option<&'static str> {
        match self {
            Relation::Left => Some("left"),
            Relation::Right => Some("right"),
            Relation::Leftmost => Some("leftmost"),
            Relation::Rightmost => Some("rightmost"),
            Relation::Frontmost => Some("frontmost"),
            Relation::Behindmost => Some("behindmost"),
            _ => None,
        }
    }

    /// Surface form after the category ("can in front").
    pub(crate) fn suffix_surface(&self) -> Option<&'static str> {
        match self {
            Relation::InFront => Some("in front"),
            Relation::InBehind => Some("in behind"),
            _ => None,
        }
    }

    /// Surface form between subject and anchor ("can next to blue box").
    pub(crate) fn anchored_surface(&self) -> Option<&'static str> {
        match self {
            Relation::Left => Some("on the left of"),
            Relation::Right => Some("on the right of"),
            Relation::InFront => Some("in front of"),
            Relation::InBehind => Some("in behind"),
            Relation::NextTo => Some("next to"),
            _ => None,
        }
    }
}

/// Which objects a relation is judged against.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum ComparisonClass {
    #[serde(rename = "sameCategory")]
    SameCategory,
    #[serde(rename = "sameCategoryAndAttribute")]
    SameCategoryAndAttribute { attribute: String },
    #[serde(rename = "nearbyObject")]
    NearbyObject,
}

/// One extracted spatial relation for a subject object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationFeature {
    pub subject_id: u32,
    pub relation: Relation,
    pub comparison_class: ComparisonClass,
    /// Required iff `comparison_class` is `NearbyObject`.
    pub anchor_id: Option<u32>,
}

/// Geometry knobs for relation extraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RelationConfig {
    /// Horizontal margin as a fraction of image width.
    pub margin_x_frac: f64,
    /// Vertical margin as a fraction of image height.
    pub margin_y_frac: f64,
    /// Radius factor for the nearby rule (see `related_objects`).
    pub nearby_radius_factor: f64,
    /// Set when the camera pose puts nearer objects higher in the frame.
    pub flip_front_axis: bool,
}

impl Default for RelationConfig {
    fn default() -> Self {
        Self {
            margin_x_frac: 0.05,
            margin_y_frac: 0.05,
            nearby_radius_factor: 1.0,
            flip_front_axis: false,
        }
    }
}

impl RelationConfig {
    pub(crate) fn margins(&self, scene: &Scene) -> (f64, f64) {
        (
            self.margin_x_frac * f64::from(scene.image_width),
            self.margin_y_frac * f64::from(scene.image_height),
        )
    }
}

/// Axis directions on the image plane. `Front` is +y (nearer the camera on
/// a tabletop rig) unless flipped in the config.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Direction {
    Left,
    Right,
    Front,
    Behind,
}

impl Direction {
    fn relation_pair(self) -> (Relation, Relation) {
        match self {
            Direction::Left => (Relation::Leftmost, Relation::Left),
            Direction::Right => (Relation::Rightmost, Relation::Right),
            Direction::Front => (Relation::Frontmost, Relation::InFront),
            Direction::Behind => (Relation::Behindmost, Relation::InBehind),
        }
    }
}

fn direction_of(relation: Relation) -> Option<Direction> {
    match relation {
        Relation::Left | Relation::Leftmost => Some(Direction::Left),
        Relation::Right | Relation::Rightmost => Some(Direction::Right),
        Relation::InFront | Relation::Frontmost => Some(Direction::Front),
        Relation::InBehind | Relation::Behindmost => Some(Direction::Behind),
        Relation::NextTo => None,
    }
}

/// True when `subject` lies in `direction` of `other` by more than the
/// margin, comparing box centers.
fn beats(
    subject: &DetectedObject,
    other: &DetectedObject,
    direction: Direction,
    margins: (f64, f64),
    flip_front_axis: bool,
) -> bool {
    let (sx, sy) = subject.bbox.center();
    let (ox, oy) = other.bbox.center();
    let (mx, my) = margins;
    let direction = if flip_front_axis {
        match direction {
            Direction::Front => Direction::Behind,
            Direction::Behind => Direction::Front,
            d => d,
        }
    } else {
        direction
    };
    match direction {
        Direction::Left => sx <= ox - mx,
        Direction::Right => sx >= ox + mx,
        Direction::Front => sy >= oy + my,
        Direction::Behind => sy <= oy - my,
    }
}

/// True when `subject` beats every member of the class by the margin; false
/// for an empty class. Covers both the pairwise-versus-class reading and the
/// superlative (extremal with margin over the runner-up) — with positive
/// margins they coincide.
fn beats_all<'a, I>(
    subject: &DetectedObject,
    class: I,
    direction: Direction,
    margins: (f64, f64),
    flip: bool,
) -> bool
where
    I: IntoIterator<Item = &'a DetectedObject>,
{
    let mut any = false;
    for other in class {
        any = true;
        if !beats(subject, other, direction, margins, flip) {
            return false;
        }
    }
    any
}

/// Id of the nearest other object by center distance, lowest id on ties.
fn nearest_other(scene: &Scene, subject: &DetectedObject) -> Option<u32> {
    scene
        .objects
        .iter()
        .filter(|o| o.id != subject.id)
        .map(|o| (o.bbox.center_distance(&subject.bbox), o.id))
        .min_by(|a, b| {
            a.0.partial_cmp(&b.0)
                .unwrap_or(core::cmp::Ordering::Equal)
                .then(a.1.cmp(&b.1))
        })
        .map(|(_, id)| id)
}

/// Extract the relational features of object `k`, deterministically ordered:
/// same-category features first, then same-category-and-attribute (per
/// attribute, in the object's attribute order), then nearby-anchor features
/// in ascending anchor id.
pub fn extract_relations(
    scene: &Scene,
    k: u32,
    config: &RelationConfig,
) -> Result<Vec<RelationFeature>, SceneError> {
    let subject = scene.require_object(k)?;
    let margins = config.margins(scene);
    let flip = config.flip_front_axis;
    let mut out = Vec::new();

    const DIRECTIONS: [Direction; 4] = [
        Direction::Left,
        Direction::Right,
        Direction::Front,
        Direction::Behind,
    ];

    // (1) same category
    let same_cat: Vec<&DetectedObject> = scene
        .objects
        .iter()
        .filter(|o| o.id != k && o.category == subject.category)
        .collect();
    for dir in DIRECTIONS {
        if beats_all(subject, same_cat.iter().copied(), dir, margins, flip) {
            let (sup, pair) = dir.relation_pair();
            for relation in [sup, pair] {
                out.push(RelationFeature {
                    subject_id: k,
                    relation,
                    comparison_class: ComparisonClass::SameCategory,
                    anchor_id: None,
                });
            }
        }
    }

    // (2) same category and shared attribute
    for attr in &subject.attributes {
        let class: Vec<&DetectedObject> = same_cat
            .iter()
            .copied()
            .filter(|o| o.has_attribute(attr))
            .collect();
        for dir in DIRECTIONS {
            if beats_all(subject, class.iter().copied(), dir, margins, flip) {
                let (sup, pair) = dir.relation_pair();
                for relation in [sup, pair] {
                    out.push(RelationFeature {
                        subject_id: k,
                        relation,
                        comparison_class: ComparisonClass::SameCategoryAndAttribute {
                            attribute: attr.clone(),
                        },
                        anchor_id: None,
                    });
                }
            }
        }
    }

    // (3) nearby anchors of any category
    let nearest = nearest_other(scene, subject);
    let mut anchors: Vec<&DetectedObject> = scene
        .objects
        .iter()
        .filter(|o| o.id != k && nearby(subject, o, config.nearby_radius_factor))
        .collect();
    anchors.sort_by_key(|o| o.id);
    for anchor in anchors {
        for dir in DIRECTIONS {
            if beats(subject, anchor, dir, margins, flip) {
                let (_, pair) = dir.relation_pair();
                out.push(RelationFeature {
                    subject_id: k,
                    relation: pair,
                    comparison_class: ComparisonClass::NearbyObject,
                    anchor_id: Some(anchor.id),
                });
            }
        }
        if nearest == Some(anchor.id) {
            out.push(RelationFeature {
                subject_id: k,
                relation: Relation::NextTo,
                comparison_class: ComparisonClass::NearbyObject,
                anchor_id: Some(anchor.id),
            });
        }
    }

    Ok(out)
}

/// A relation constraint as it appears in a realized expression, evaluated
/// for an arbitrary candidate object.
#[derive(Debug, Clone, PartialEq)]
pub enum RelationPredicate {
    /// Relative to the candidate's own comparison class: objects of the same
    /// category, narrowed by `attribute` when the expression names one.
    ClassRelative {
        relation: Relation,
        attribute: Option<String>,
    },
    /// Relative to some anchor object matching the given category (and
    /// attribute, when named).
    Anchored {
        relation: Relation,
        anchor_category: String,
        anchor_attribute: Option<String>,
    },
}

/// The semantic content of a referring expression: what an object must be
/// for the expression to describe it. Shared by generation-side uniqueness
/// checks and the lexical grounder so the two can never disagree.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureBundle {
    pub category: String,
    pub attributes: Vec<String>,
    pub relations: Vec<RelationPredicate>,
    pub zone: Option<Zone>,
}

/// Whether `candidate` satisfies every constraint of the bundle under the
/// same geometry rules used for extraction.
pub fn satisfies(
    scene: &Scene,
    candidate: &DetectedObject,
    bundle: &FeatureBundle,
    config: &RelationConfig,
) -> bool {
    if candidate.category != bundle.category {
        return false;
    }
    if !bundle.attributes.iter().all(|a| candidate.has_attribute(a)) {
        return false;
    }
    if let Some(zone) = bundle.zone {
        let (cx, cy) = candidate.bbox.center();
        if !zone.contains_point(cx, cy, scene.image_width, scene.image_height) {
            return false;
        }
    }
    bundle
        .relations
        .iter()
        .all(|p| predicate_holds(scene, candidate, p, config))
}

fn predicate_holds(
    scene: &Scene,
    candidate: &DetectedObject,
    predicate: &RelationPredicate,
    config: &RelationConfig,
) -> bool {
    let margins = config.margins(scene);
    let flip = config.flip_front_axis;
    match predicate {
        RelationPredicate::ClassRelative {
            relation,
            attribute,
        } => {
            let Some(dir) = direction_of(*relation) else {
                // "next to" never appears without an anchor.
                return false;
            };
            let class = scene.objects.iter().filter(|o| {
                o.id != candidate.id
                    && o.category == candidate.category
                    && attribute.as_deref().is_none_or(|a| o.has_attribute(a))
            });
            beats_all(candidate, class, dir, margins, flip)
        }
        RelationPredicate::Anchored {
            relation,
            anchor_category,
            anchor_attribute,
        } => {
            let anchors = scene.objects.iter().filter(|o| {
                o.id != candidate.id
                    && o.category == *anchor_category
                    && anchor_attribute
                        .as_deref()
                        .is_none_or(|a| o.has_attribute(a))
            });
            match direction_of(*relation) {
                Some(dir) => anchors
                    .into_iter()
                    .any(|a| beats(candidate, a, dir, margins, flip)),
                None => {
                    // next to: the anchor must be the candidate's nearest
                    // object and pass the nearby rule.
                    let Some(nearest) = nearest_other(scene, candidate) else {
                        return false;
                    };
                    anchors.into_iter().any(|a| {
                        a.id == nearest && nearby(candidate, a, config.nearby_radius_factor)
                    })
                }
            }
        }
    }
}

/// Ids of all objects satisfying the bundle, ascending.
pub fn satisfiers(scene: &Scene, bundle: &FeatureBundle, config: &RelationConfig) -> Vec<u32> {
    let mut ids: Vec<u32> = scene
        .objects
        .iter()
        .filter(|o| satisfies(scene, o, bundle, config))
        .map(|o| o.id)
        .collect();
    ids.sort_unstable();
    ids
}

/// True iff no object other than `k` satisfies the bundle.
pub fn is_discriminative(
    scene: &Scene,
    k: u32,
    bundle: &FeatureBundle,
    config: &RelationConfig,
) -> Result<bool, SceneError> {
    scene.require_object(k)?;
    Ok(satisfiers(scene, bundle, config).iter().all(|&id| id == k))
}
