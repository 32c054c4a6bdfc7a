//! Seeded synthetic-scene generator for streams, benchmarks, and property
//! tests. Coordinates are integer-valued so geometric transforms used in
//! tests (mirroring, translation) stay exact in floating point.

use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::scene::{BBox, DetectedObject, Scene};

/// Knobs for the synthesizer.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub image_width: u32,
    pub image_height: u32,
    /// Inclusive object-count range.
    pub min_objects: usize,
    pub max_objects: usize,
    pub categories: Vec<String>,
    pub attributes: Vec<String>,
    /// Guarantee at least this many same-category pairs per scene.
    pub same_category_pairs: usize,
    /// Keep boxes at least this far from the image border, so small
    /// translations of a whole scene stay in bounds.
    pub border: u32,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            image_width: 640,
            image_height: 480,
            min_objects: 5,
            max_objects: 12,
            categories: [
                "cup", "can", "bowl", "box", "ball", "bottle", "plate", "banana", "apple", "mug",
            ]
            .map(String::from)
            .to_vec(),
            attributes: [
                "yellow", "blue", "red", "green", "white", "black", "wooden", "metal", "plastic",
                "striped",
            ]
            .map(String::from)
            .to_vec(),
            same_category_pairs: 2,
            border: 24,
        }
    }
}

/// Deterministic scene stream: same seed and config, same scenes.
#[derive(Debug, Clone)]
pub struct SceneSynthesizer {
    config: SynthConfig,
    rng: ChaCha8Rng,
    counter: u64,
}

impl SceneSynthesizer {
    pub fn new(seed: u64, config: SynthConfig) -> Self {
        Self {
            config,
            rng: ChaCha8Rng::seed_from_u64(seed),
            counter: 0,
        }
    }

    pub fn with_seed(seed: u64) -> Self {
        Self::new(seed, SynthConfig::default())
    }

    pub fn config(&self) -> &SynthConfig {
        &self.config
    }

    /// Generate the next scene of the stream.
    pub fn next_scene(&mut self) -> Scene {
        self.counter += 1;
        let scene_id = alloc::format!("synth-{:06}", self.counter);
        self.scene_with_id(scene_id)
    }

    fn scene_with_id(&mut self, scene_id: String) -> Scene {
        let c = &self.config;
        let k = self
            .rng
            .gen_range(c.min_objects..=c.max_objects)
            .max(2 * c.same_category_pairs);

        // Assign categories: the first `same_category_pairs` categories are
        // used twice so relational expressions are always exercised.
        let mut categories: Vec<String> = Vec::with_capacity(k);
        for pair in 0..c.same_category_pairs {
            let cat = c.categories[pair % c.categories.len()].clone();
            categories.push(cat.clone());
            categories.push(cat);
        }
        while categories.len() < k {
            let i = self.rng.gen_range(0..c.categories.len());
            categories.push(c.categories[i].clone());
        }
        // Deterministic shuffle so the duplicated categories are not always
        // the lowest ids.
        for i in (1..categories.len()).rev() {
            let j = self.rng.gen_range(0..=i);
            categories.swap(i, j);
        }

        let (image_width, image_height) = (c.image_width, c.image_height);
        let mut objects = Vec::with_capacity(categories.len());
        for (id, category) in categories.into_iter().enumerate() {
            let bbox = self.random_box();
            let attributes = self.random_attributes();
            objects.push(DetectedObject {
                id: id as u32,
                category,
                attributes,
                bbox,
            });
        }
        Scene {
            scene_id,
            image_width,
            image_height,
            objects,
            time_step: 0,
        }
    }

    fn random_box(&mut self) -> BBox {
        let c = &self.config;
        let max_w = (c.image_width / 4).max(24);
        let max_h = (c.image_height / 4).max(24);
        let w = self.rng.gen_range(16..=max_w);
        let h = self.rng.gen_range(16..=max_h);
        let x1 = self.rng.gen_range(c.border..=c.image_width - c.border - w);
        let y1 = self.rng.gen_range(c.border..=c.image_height - c.border - h);
        BBox::new(
            f64::from(x1),
            f64::from(y1),
            f64::from(x1 + w),
            f64::from(y1 + h),
        )
    }

    fn random_attributes(&mut self) -> Vec<String> {
        let c = &self.config;
        let count = self.rng.gen_range(0..=2usize);
        let mut attrs: Vec<String> = Vec::with_capacity(count);
        for _ in 0..count {
            let a = c.attributes[self.rng.gen_range(0..c.attributes.len())].clone();
            if !attrs.contains(&a) {
                attrs.push(a);
            }
        }
        attrs
    }
}
