//! groundgen-core: turn per-scene object detections into synthetic
//! pick-and-place visual-grounding training data, and evaluate grounding
//! predictions.
//!
//! The crate is sans-IO: it operates on in-memory scenes and strings and
//! returns structured data. File formats, the CLI, and the external-grounder
//! wire protocol live in the companion `groundgen-cli` crate.
//!
//! Pipeline stages, in dependency order:
//!
//! 1. [`scene`] — validated detections (boxes, categories, attributes).
//! 2. [`relations`] — spatial-relation heuristics over box centers.
//! 3. [`instruction`] — template-based referring expressions and full
//!    pick/place instructions, including preposition-shifted target boxes.
//! 4. [`buffer`] — bounded replay store with exponential forgetting.
//! 5. [`grounding`] — inverse-template parser and a lexical grounder, plus
//!    the adapter trait external learned grounders plug into.
//! 6. [`eval`] — IoU, precision@threshold, Gaussian KDE, 1-D Wasserstein.
//!
//! Everything is deterministic under a fixed seed; no global state.

#![cfg_attr(not(feature = "std"), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(all(not(feature = "std"), not(feature = "libm")))]
compile_error!("groundgen-core requires either the `std` or the `libm` feature");

pub mod buffer;
pub mod eval;
pub mod grounding;
pub mod instruction;
pub mod relations;
pub mod scene;
pub mod synth;

mod math;
mod seed;

#[cfg(test)]
pub(crate) mod testutil;

pub use buffer::{forget_probability, BufferConfig, BufferError, BufferRecord, VolatileBuffer};
pub use eval::{iou, precision_at, wasserstein_1d, AreaSample, EvalPair, EvalReport};
pub use grounding::{
    ground_external, parse_instruction, ExternalGrounder, GroundingError, GroundingQuery,
    GroundingResult, LexicalGrounder, ParsedInstruction,
};
pub use instruction::generate_pick_instructions;
pub use instruction::{
    generate_place_instructions, generate_scene_instructions, shift_box_for_preposition,
    CommandLexicon, GenerationConfig, InstructionTriplet, Preposition, TaskKind, TemplateId,
};
pub use relations::{
    extract_relations, is_discriminative, Relation, RelationConfig, RelationFeature,
};
pub use scene::{
    related_objects, BBox, DetectedObject, Scene, SceneError, VocabKind, Vocabulary, Zone,
};
