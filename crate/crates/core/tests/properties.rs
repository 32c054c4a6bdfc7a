//! Property tests over the public API: metric axioms, geometric
//! invariances, and buffer bounds on randomized inputs.

use proptest::prelude::*;

use groundgen_core::buffer::{forget_probability, BufferConfig, BufferRecord, VolatileBuffer};
use groundgen_core::eval::{iou, precision_at, wasserstein_1d, AreaSample, EvalPair};
use groundgen_core::instruction::{shift_box_for_preposition, Preposition};
use groundgen_core::relations::{extract_relations, Relation, RelationConfig, RelationFeature};
use groundgen_core::scene::{related_objects, BBox, Scene, Zone};
use groundgen_core::synth::SceneSynthesizer;

fn arb_box() -> impl Strategy<Value = BBox> {
    (0u32..580, 0u32..420, 1u32..60, 1u32..60).prop_map(|(x, y, w, h)| {
        BBox::new(
            f64::from(x),
            f64::from(y),
            f64::from(x + w),
            f64::from(y + h),
        )
    })
}

proptest! {
    #[test]
    fn iou_is_symmetric_bounded_and_one_on_self(a in arb_box(), b in arb_box()) {
        let ab = iou(&a, &b);
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(ab, iou(&b, &a));
        prop_assert_eq!(iou(&a, &a), 1.0);
    }

    #[test]
    fn iou_is_translation_invariant(a in arb_box(), b in arb_box(), dx in -50i32..50, dy in -50i32..50) {
        let t = |bx: &BBox| BBox::new(
            bx.x1 + f64::from(dx),
            bx.y1 + f64::from(dy),
            bx.x2 + f64::from(dx),
            bx.y2 + f64::from(dy),
        );
        prop_assert_eq!(iou(&a, &b), iou(&t(&a), &t(&b)));
    }

    #[test]
    fn precision_is_permutation_invariant(seed in 0u64..1000, n in 2usize..30) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut pairs: Vec<EvalPair> = (0..n)
            .map(|i| {
                let gold = BBox::new(0.0, 0.0, 100.0, 100.0);
                let cut = rng.gen_range(1..=100) as f64;
                EvalPair {
                    id: format!("p{i}"),
                    gold_box: gold,
                    predicted_box: BBox::new(0.0, 0.0, 100.0, cut),
                }
            })
            .collect();
        let before = precision_at(&pairs, 0.5).unwrap().precision_at_threshold;
        pairs.reverse();
        let after = precision_at(&pairs, 0.5).unwrap().precision_at_threshold;
        prop_assert_eq!(before, after);
    }

    #[test]
    fn wasserstein_is_a_metric_on_samples(
        xs in prop::collection::vec(0.0f64..100.0, 1..40),
        ys in prop::collection::vec(0.0f64..100.0, 1..40),
        zs in prop::collection::vec(0.0f64..100.0, 1..40),
    ) {
        let a = AreaSample::new("a".into(), xs).unwrap();
        let b = AreaSample::new("b".into(), ys).unwrap();
        let c = AreaSample::new("c".into(), zs).unwrap();
        let ab = wasserstein_1d(&a, &b).unwrap();
        let ba = wasserstein_1d(&b, &a).unwrap();
        let ac = wasserstein_1d(&a, &c).unwrap();
        let cb = wasserstein_1d(&c, &b).unwrap();
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert_eq!(wasserstein_1d(&a, &a).unwrap(), 0.0);
        prop_assert!(ab <= ac + cb + 1e-9, "triangle violated: {} > {} + {}", ab, ac, cb);
    }

    #[test]
    fn shift_preserves_size_and_stays_inside(b in arb_box(), extent in 0.0f64..3.0) {
        for prep in Preposition::ALL {
            let shifted = shift_box_for_preposition(&b, prep, 640, 480, extent).unwrap();
            prop_assert!((shifted.bbox.width() - b.width()).abs() < 1e-9);
            prop_assert!((shifted.bbox.height() - b.height()).abs() < 1e-9);
            prop_assert!(shifted.bbox.fits_in(640, 480));
        }
    }

    #[test]
    fn forget_probability_is_monotone_in_age(gamma in 0.0f64..5.0, capacity in 1u64..200) {
        let config = BufferConfig { capacity, gamma, seed: 0 };
        let t = capacity + 10;
        let mut last = -1.0;
        for age in 0..=capacity {
            let p = forget_probability(t - age, t, &config).unwrap();
            prop_assert!(p >= last - 1e-15, "p({age}) = {p} < p({}) = {last}", age - 1);
            prop_assert!((0.0..=1.0).contains(&p));
            last = p;
        }
        prop_assert_eq!(forget_probability(t, t, &config).unwrap(), 0.0);
        prop_assert_eq!(forget_probability(t - capacity, t, &config).unwrap(), 1.0);
    }

    #[test]
    fn buffer_never_exceeds_capacity(capacity in 1u64..12, gamma in 0.0f64..2.0, seed in 0u64..100) {
        let config = BufferConfig { capacity, gamma, seed };
        let mut synth = SceneSynthesizer::with_seed(seed);
        let mut buffer = VolatileBuffer::new(config).unwrap();
        for step in 1..=64 {
            let mut scene = synth.next_scene();
            scene.time_step = step;
            buffer
                .advance(BufferRecord { birth_step: step, scene, triplets: vec![] })
                .unwrap();
            prop_assert!(buffer.len() as u64 <= capacity);
        }
    }

    #[test]
    fn related_objects_is_symmetric(seed in 0u64..300) {
        let mut synth = SceneSynthesizer::with_seed(seed);
        let scene = synth.next_scene();
        for a in &scene.objects {
            for b in &scene.objects {
                if a.id == b.id {
                    continue;
                }
                let rel_a = related_objects(&scene, a.id, 1.0).unwrap();
                let rel_b = related_objects(&scene, b.id, 1.0).unwrap();
                prop_assert_eq!(rel_a.contains(&b.id), rel_b.contains(&a.id));
            }
        }
    }

    #[test]
    fn zones_partition_the_image(x in 0u32..640, y in 0u32..480) {
        let zone = Zone::of_point(f64::from(x), f64::from(y), 640, 480);
        let hits = (0..3)
            .flat_map(|r| (0..3).map(move |c| Zone::new(r, c)))
            .filter(|z| z.contains_point(f64::from(x), f64::from(y), 640, 480))
            .count();
        prop_assert_eq!(hits, 1);
        prop_assert!(Zone::from_phrase(zone.phrase()) == Some(zone));
    }
}

fn mirror_scene(scene: &Scene) -> Scene {
    let mut mirrored = scene.clone();
    let w = f64::from(scene.image_width);
    for object in &mut mirrored.objects {
        object.bbox = BBox::new(
            w - object.bbox.x2,
            object.bbox.y1,
            w - object.bbox.x1,
            object.bbox.y2,
        );
    }
    mirrored
}

fn swap_horizontal(feature: &RelationFeature) -> RelationFeature {
    let mut out = feature.clone();
    out.relation = match feature.relation {
        Relation::Left => Relation::Right,
        Relation::Right => Relation::Left,
        Relation::Leftmost => Relation::Rightmost,
        Relation::Rightmost => Relation::Leftmost,
        other => other,
    };
    out
}

#[test]
fn at_most_one_object_per_class_holds_each_superlative() {
    let config = RelationConfig::default();
    let mut synth = SceneSynthesizer::with_seed(777);
    for _ in 0..300 {
        let scene = synth.next_scene();
        let mut holders: std::collections::BTreeMap<(String, Relation), Vec<u32>> =
            std::collections::BTreeMap::new();
        for object in &scene.objects {
            for feature in extract_relations(&scene, object.id, &config).unwrap() {
                if feature.relation.is_superlative()
                    && feature.comparison_class
                        == groundgen_core::relations::ComparisonClass::SameCategory
                {
                    holders
                        .entry((object.category.clone(), feature.relation))
                        .or_default()
                        .push(object.id);
                }
            }
        }
        for ((category, relation), ids) in holders {
            assert!(
                ids.len() <= 1,
                "{}: {} objects of `{category}` claim {relation:?}",
                scene.scene_id,
                ids.len()
            );
        }
    }
}

#[test]
fn snapshot_median_age_stays_below_half_capacity() {
    // Retention is non-increasing in age for any gamma, so the buffer's age
    // distribution never tilts older than uniform; check a large gamma over
    // several seeds.
    let capacity = 20u64;
    for seed in [1u64, 2, 3, 4, 5] {
        let config = BufferConfig {
            capacity,
            gamma: 10.0,
            seed,
        };
        let mut synth = SceneSynthesizer::with_seed(seed);
        let mut buffer = VolatileBuffer::new(config).unwrap();
        let mut ages: Vec<u64> = Vec::new();
        for step in 1..=2000 {
            let mut scene = synth.next_scene();
            scene.time_step = step;
            buffer
                .advance(BufferRecord {
                    birth_step: step,
                    scene,
                    triplets: vec![],
                })
                .unwrap();
            if step > capacity {
                ages.extend(buffer.records().iter().map(|r| step - r.birth_step));
            }
        }
        ages.sort_unstable();
        let n = ages.len();
        let median = if n.is_multiple_of(2) {
            (ages[n / 2 - 1] + ages[n / 2]) as f64 / 2.0
        } else {
            ages[n / 2] as f64
        };
        assert!(
            median < capacity as f64 / 2.0,
            "seed {seed}: median age {median} >= M/2"
        );
    }
}

#[test]
fn mirror_symmetry_over_randomized_scenes() {
    let config = RelationConfig::default();
    let mut synth = SceneSynthesizer::with_seed(2024);
    for _ in 0..200 {
        let scene = synth.next_scene();
        let mirrored = mirror_scene(&scene);
        for object in &scene.objects {
            let mut expected: Vec<RelationFeature> = extract_relations(&scene, object.id, &config)
                .unwrap()
                .iter()
                .map(swap_horizontal)
                .collect();
            let mut actual = extract_relations(&mirrored, object.id, &config).unwrap();
            expected.sort_by(|a, b| format!("{a:?}").cmp(&format!("{b:?}")));
            actual.sort_by(|a, b| format!("{a:?}").cmp(&format!("{b:?}")));
            assert_eq!(expected, actual, "scene {}", scene.scene_id);
        }
    }
}

#[test]
fn translation_invariance_over_randomized_scenes() {
    let config = RelationConfig::default();
    let mut synth = SceneSynthesizer::with_seed(4048);
    for round in 0..200u64 {
        let scene = synth.next_scene();
        let (dx, dy) = ((round % 20) as f64 - 10.0, (round % 14) as f64 - 7.0);
        let mut shifted = scene.clone();
        for object in &mut shifted.objects {
            object.bbox = BBox::new(
                object.bbox.x1 + dx,
                object.bbox.y1 + dy,
                object.bbox.x2 + dx,
                object.bbox.y2 + dy,
            );
        }
        shifted.validate_geometry().unwrap();
        for object in &scene.objects {
            assert_eq!(
                extract_relations(&scene, object.id, &config).unwrap(),
                extract_relations(&shifted, object.id, &config).unwrap(),
                "scene {} translated by ({dx}, {dy})",
                scene.scene_id
            );
        }
    }
}
