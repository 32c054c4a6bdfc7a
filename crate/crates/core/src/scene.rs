//! Domain types for one visual observation: bounding boxes, detected
//! objects, scenes, and the controlled category/attribute vocabularies.
//!
//! All types are immutable after construction and safe to share across
//! threads. Validation is explicit: deserialize (or build) first, then call
//! [`Scene::validate`] against the loaded vocabularies.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math;

/// Axis-aligned box in image pixels, origin at top-left, x rightward,
/// y downward. `(x1, y1)` is the top-left corner, `(x2, y2)` bottom-right.
///
/// Serializes as the 4-element array `[x1, y1, x2, y2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        Self { x1, y1, x2, y2 }
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    /// Area in pixels²; zero or negative means the box is degenerate.
    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)
    }

    pub fn diagonal(&self) -> f64 {
        math::sqrt(self.width() * self.width() + self.height() * self.height())
    }

    /// Strictly positive area with x1 < x2 and y1 < y2.
    pub fn is_valid(&self) -> bool {
        self.x1 < self.x2 && self.y1 < self.y2
    }

    pub fn fits_in(&self, width: u32, height: u32) -> bool {
        self.x1 >= 0.0
            && self.y1 >= 0.0
            && self.x2 <= f64::from(width)
            && self.y2 <= f64::from(height)
    }

    pub fn center_distance(&self, other: &BBox) -> f64 {
        let (ax, ay) = self.center();
        let (bx, by) = other.center();
        math::sqrt((ax - bx) * (ax - bx) + (ay - by) * (ay - by))
    }
}

impl From<[f64; 4]> for BBox {
    fn from(v: [f64; 4]) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x1, b.y1, b.x2, b.y2]
    }
}

/// One detected object: category, attribute set, box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectedObject {
    /// Scene-unique id.
    pub id: u32,
    pub category: String,
    /// Possibly empty; order is preserved from ingestion.
    #[serde(default)]
    pub attributes: Vec<String>,
    #[serde(rename = "box")]
    pub bbox: BBox,
}

impl DetectedObject {
    pub fn has_attribute(&self, attribute: &str) -> bool {
        self.attributes.iter().any(|a| a == attribute)
    }
}

/// One visual observation: image metadata plus the K ≥ 1 detected objects.
///
/// `time_step` is assigned by the stream orchestrator and is not part of the
/// scene file schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub scene_id: String,
    pub image_width: u32,
    pub image_height: u32,
    pub objects: Vec<DetectedObject>,
    #[serde(skip)]
    pub time_step: u64,
}

impl Scene {
    pub fn object(&self, id: u32) -> Option<&DetectedObject> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub(crate) fn require_object(&self, id: u32) -> Result<&DetectedObject, SceneError> {
        self.object(id).ok_or(SceneError::UnknownObject { id })
    }

    /// Check the structural invariants: K ≥ 1, unique ids, non-degenerate
    /// boxes that fit inside the declared image dimensions.
    pub fn validate_geometry(&self) -> Result<(), SceneError> {
        if self.objects.is_empty() {
            return Err(SceneError::EmptyScene {
                scene_id: self.scene_id.clone(),
            });
        }
        let mut seen = BTreeSet::new();
        for obj in &self.objects {
            if !seen.insert(obj.id) {
                return Err(SceneError::DuplicateObjectId {
                    scene_id: self.scene_id.clone(),
                    id: obj.id,
                });
            }
            if !obj.bbox.is_valid() {
                return Err(SceneError::DegenerateBox {
                    scene_id: self.scene_id.clone(),
                    object_id: obj.id,
                });
            }
            if !obj.bbox.fits_in(self.image_width, self.image_height) {
                return Err(SceneError::BoxOutOfBounds {
                    scene_id: self.scene_id.clone(),
                    object_id: obj.id,
                });
            }
        }
        Ok(())
    }

    /// Check every category and attribute token against the vocabularies.
    pub fn validate_vocab(
        &self,
        categories: &Vocabulary,
        attributes: &Vocabulary,
    ) -> Result<(), SceneError> {
        for obj in &self.objects {
            if !categories.contains(&obj.category) {
                return Err(SceneError::UnknownCategory {
                    object_id: obj.id,
                    token: obj.category.clone(),
                });
            }
            for attr in &obj.attributes {
                if !attributes.contains(attr) {
                    return Err(SceneError::UnknownAttribute {
                        object_id: obj.id,
                        token: attr.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Full validation: geometry plus vocabulary membership.
    pub fn validate(
        &self,
        categories: &Vocabulary,
        attributes: &Vocabulary,
    ) -> Result<(), SceneError> {
        self.validate_geometry()?;
        self.validate_vocab(categories, attributes)
    }
}

/// The objects associated with object `k`: either sharing its category or
/// "nearby" (center distance ≤ `nearby_radius_factor` × mean of the two
/// boxes' diagonals). Excludes `k` itself.
pub fn related_objects(
    scene: &Scene,
    k: u32,
    nearby_radius_factor: f64,
) -> Result<BTreeSet<u32>, SceneError> {
    let subject = scene.require_object(k)?;
    let mut out = BTreeSet::new();
    for other in &scene.objects {
        if other.id == k {
            continue;
        }
        if other.category == subject.category || nearby(subject, other, nearby_radius_factor) {
            out.insert(other.id);
        }
    }
    Ok(out)
}

/// The "nearby" rule shared by `related_objects` and the relation heuristics.
pub(crate) fn nearby(a: &DetectedObject, b: &DetectedObject, radius_factor: f64) -> bool {
    let mean_diag = (a.bbox.diagonal() + b.bbox.diagonal()) / 2.0;
    a.bbox.center_distance(&b.bbox) <= radius_factor * mean_diag
}

/// Which vocabulary a token set belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VocabKind {
    Category,
    Attribute,
}

/// Ordered set of unique, non-empty, lowercase tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    kind: VocabKind,
    tokens: Vec<String>,
    index: BTreeSet<String>,
}

/// Result of building a vocabulary: the vocabulary plus any tokens that were
/// dropped as duplicates (first occurrence kept).
#[derive(Debug, Clone)]
pub struct VocabularyLoad {
    pub vocabulary: Vocabulary,
    pub duplicates: Vec<String>,
}

impl Vocabulary {
    /// Build from raw lines: tokens are trimmed and lowercased, blank lines
    /// skipped, duplicates dropped (reported in the load result).
    pub fn from_lines<'a, I>(kind: VocabKind, lines: I) -> Result<VocabularyLoad, SceneError>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut tokens = Vec::new();
        let mut index = BTreeSet::new();
        let mut duplicates = Vec::new();
        for line in lines {
            let token = line.trim().to_lowercase();
            if token.is_empty() {
                continue;
            }
            if index.insert(token.clone()) {
                tokens.push(token);
            } else {
                duplicates.push(token);
            }
        }
        if tokens.is_empty() {
            return Err(SceneError::EmptyVocabulary { kind });
        }
        Ok(VocabularyLoad {
            vocabulary: Vocabulary {
                kind,
                tokens,
                index,
            },
            duplicates,
        })
    }

    pub fn kind(&self) -> VocabKind {
        self.kind
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains(token)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(String::as_str)
    }

    /// Longest token length in whitespace-separated words (for the
    /// longest-match parser).
    pub fn max_words(&self) -> usize {
        self.tokens
            .iter()
            .map(|t| t.split_whitespace().count())
            .max()
            .unwrap_or(0)
    }
}

/// Cell of the 3×3 grid of equal thirds over the image, used for the
/// location slot of template V. Row 0 is the top of the image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Zone {
    pub row: u8,
    pub col: u8,
}

impl Zone {
    /// The nine zone phrases, row-major from top-left.
    pub const PHRASES: [&'static str; 9] = [
        "on the top left of the table",
        "on the top of the table",
        "on the top right of the table",
        "on the left of the table",
        "on the center",
        "on the right of the table",
        "on the bottom left of the table",
        "on the bottom of the table",
        "on the bottom right of the table",
    ];

    pub fn new(row: u8, col: u8) -> Self {
        debug_assert!(row < 3 && col < 3);
        Self { row, col }
    }

    /// Zone containing a point, with points on the far edge clamped into
    /// the last cell.
    pub fn of_point(x: f64, y: f64, image_width: u32, image_height: u32) -> Self {
        let col = ((3.0 * x / f64::from(image_width)) as i64).clamp(0, 2) as u8;
        let row = ((3.0 * y / f64::from(image_height)) as i64).clamp(0, 2) as u8;
        Self { row, col }
    }

    pub fn phrase(&self) -> &'static str {
        Self::PHRASES[usize::from(self.row) * 3 + usize::from(self.col)]
    }

    pub fn from_phrase(phrase: &str) -> Option<Self> {
        Self::PHRASES
            .iter()
            .position(|p| *p == phrase)
            .map(|i| Self::new((i / 3) as u8, (i % 3) as u8))
    }

    /// Whether a point falls inside this zone.
    pub fn contains_point(&self, x: f64, y: f64, image_width: u32, image_height: u32) -> bool {
        Self::of_point(x, y, image_width, image_height) == *self
    }
}

/// Errors raised by scene construction, validation, and lookup.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SceneError {
    #[error("empty {kind:?} vocabulary")]
    EmptyVocabulary { kind: VocabKind },
    #[error("scene `{scene_id}` contains no objects")]
    EmptyScene { scene_id: String },
    #[error("scene `{scene_id}` has duplicate object id {id}")]
    DuplicateObjectId { scene_id: String, id: u32 },
    #[error("object {object_id} in scene `{scene_id}` has a degenerate box")]
    DegenerateBox { scene_id: String, object_id: u32 },
    #[error("object {object_id} in scene `{scene_id}` has a box outside the image")]
    BoxOutOfBounds { scene_id: String, object_id: u32 },
    #[error("object {object_id} has unknown category `{token}`")]
    UnknownCategory { object_id: u32, token: String },
    #[error("object {object_id} has unknown attribute `{token}`")]
    UnknownAttribute { object_id: u32, token: String },
    #[error("no object with id {id} in scene")]
    UnknownObject { id: u32 },
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    fn vocab(kind: VocabKind, tokens: &[&str]) -> Vocabulary {
        Vocabulary::from_lines(kind, tokens.iter().copied())
            .unwrap()
            .vocabulary
    }

    fn obj(id: u32, category: &str, attributes: &[&str], bbox: [f64; 4]) -> DetectedObject {
        DetectedObject {
            id,
            category: category.to_string(),
            attributes: attributes.iter().map(|a| a.to_string()).collect(),
            bbox: bbox.into(),
        }
    }

    fn scene(objects: Vec<DetectedObject>) -> Scene {
        Scene {
            scene_id: "s0".to_string(),
            image_width: 640,
            image_height: 480,
            objects,
            time_step: 0,
        }
    }

    #[test]
    fn vocabulary_reads_back_in_order() {
        let load = Vocabulary::from_lines(VocabKind::Category, ["cup", "ball", "box"]).unwrap();
        assert_eq!(load.vocabulary.len(), 3);
        assert!(load.duplicates.is_empty());
        let tokens: Vec<_> = load.vocabulary.iter().collect();
        assert_eq!(tokens, vec!["cup", "ball", "box"]);
    }

    #[test]
    fn vocabulary_lowercases_and_dedupes() {
        let load = Vocabulary::from_lines(VocabKind::Category, ["Cup", "cup"]).unwrap();
        assert_eq!(load.vocabulary.len(), 1);
        assert!(load.vocabulary.contains("cup"));
        assert_eq!(load.duplicates, vec!["cup".to_string()]);
    }

    #[test]
    fn empty_vocabulary_is_an_error() {
        let err = Vocabulary::from_lines(VocabKind::Attribute, ["", "  "]).unwrap_err();
        assert_eq!(
            err,
            SceneError::EmptyVocabulary {
                kind: VocabKind::Attribute
            }
        );
    }

    #[test]
    fn degenerate_box_rejected() {
        let s = scene(vec![obj(0, "cup", &[], [10.0, 10.0, 10.0, 20.0])]);
        let err = s.validate_geometry().unwrap_err();
        assert!(matches!(
            err,
            SceneError::DegenerateBox { object_id: 0, .. }
        ));
    }

    #[test]
    fn out_of_bounds_box_rejected() {
        let s = scene(vec![obj(0, "cup", &[], [600.0, 10.0, 700.0, 20.0])]);
        let err = s.validate_geometry().unwrap_err();
        assert!(matches!(
            err,
            SceneError::BoxOutOfBounds { object_id: 0, .. }
        ));
    }

    #[test]
    fn unknown_category_rejected() {
        let cats = vocab(VocabKind::Category, &["cup"]);
        let attrs = vocab(VocabKind::Attribute, &["yellow"]);
        let s = scene(vec![obj(0, "flibber", &[], [0.0, 0.0, 10.0, 10.0])]);
        let err = s.validate(&cats, &attrs).unwrap_err();
        assert!(matches!(err, SceneError::UnknownCategory { .. }));
    }

    #[test]
    fn related_by_shared_category_regardless_of_distance() {
        let s = scene(vec![
            obj(0, "cup", &[], [0.0, 0.0, 10.0, 10.0]),
            obj(1, "cup", &[], [600.0, 400.0, 630.0, 470.0]),
        ]);
        let rel0 = related_objects(&s, 0, 1.0).unwrap();
        let rel1 = related_objects(&s, 1, 1.0).unwrap();
        assert!(rel0.contains(&1));
        assert!(rel1.contains(&0));
    }

    #[test]
    fn single_object_scene_has_no_relatives() {
        let s = scene(vec![obj(0, "cup", &[], [0.0, 0.0, 10.0, 10.0])]);
        assert!(related_objects(&s, 0, 1.0).unwrap().is_empty());
    }

    #[test]
    fn nearby_rule_uses_mean_diagonal() {
        // A centered at (100,100) and B at (130,100), both with diagonal 50
        // (boxes 30x40): distance 30 <= 1.0 * 50, different categories.
        let s = scene(vec![
            obj(0, "cup", &[], [85.0, 80.0, 115.0, 120.0]),
            obj(1, "ball", &[], [115.0, 80.0, 145.0, 120.0]),
        ]);
        assert!((s.objects[0].bbox.diagonal() - 50.0).abs() < 1e-12);
        let rel = related_objects(&s, 0, 1.0).unwrap();
        assert!(rel.contains(&1));
        // Symmetric under the same mean diagonal.
        assert!(related_objects(&s, 1, 1.0).unwrap().contains(&0));
    }

    #[test]
    fn unknown_object_id_errors() {
        let s = scene(vec![obj(0, "cup", &[], [0.0, 0.0, 10.0, 10.0])]);
        assert_eq!(
            related_objects(&s, 9, 1.0).unwrap_err(),
            SceneError::UnknownObject { id: 9 }
        );
    }

    #[test]
    fn zone_grid_covers_image() {
        assert_eq!(Zone::of_point(0.0, 0.0, 640, 480), Zone::new(0, 0));
        assert_eq!(Zone::of_point(320.0, 240.0, 640, 480), Zone::new(1, 1));
        assert_eq!(Zone::of_point(639.0, 479.0, 640, 480), Zone::new(2, 2));
        // Far edge clamps into the last cell.
        assert_eq!(Zone::of_point(640.0, 480.0, 640, 480), Zone::new(2, 2));
        assert_eq!(Zone::new(1, 1).phrase(), "on the center");
        assert_eq!(
            Zone::from_phrase("on the top left of the table"),
            Some(Zone::new(0, 0))
        );
    }
}
