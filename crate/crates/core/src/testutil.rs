//! Shared fixtures for unit tests.

use alloc::string::ToString;
use alloc::vec::Vec;

use crate::scene::{DetectedObject, Scene, VocabKind, Vocabulary};

pub(crate) fn obj(id: u32, category: &str, attributes: &[&str], bbox: [f64; 4]) -> DetectedObject {
    DetectedObject {
        id,
        category: category.to_string(),
        attributes: attributes.iter().map(|a| a.to_string()).collect(),
        bbox: bbox.into(),
    }
}

pub(crate) fn scene(image_width: u32, image_height: u32, objects: Vec<DetectedObject>) -> Scene {
    Scene {
        scene_id: "test-scene".to_string(),
        image_width,
        image_height,
        objects,
        time_step: 0,
    }
}

pub(crate) fn vocab(kind: VocabKind, tokens: &[&str]) -> Vocabulary {
    Vocabulary::from_lines(kind, tokens.iter().copied())
        .unwrap()
        .vocabulary
}

pub(crate) fn default_vocabs() -> (Vocabulary, Vocabulary) {
    (
        vocab(
            VocabKind::Category,
            &[
                "cup", "can", "bowl", "box", "ball", "bottle", "plate", "mug",
            ],
        ),
        vocab(
            VocabKind::Attribute,
            &["yellow", "blue", "red", "green", "wooden", "metal", "white"],
        ),
    )
}
