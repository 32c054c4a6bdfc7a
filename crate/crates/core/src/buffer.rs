//! Bounded-memory replay store with exponential forgetting.
//!
//! A record born at step τ is retained at step t with marginal probability
//! `S(τ, t) = 1 − p_forget(τ, t)` where
//!
//! ```text
//! p_forget(τ, t) = min((e^{−γ(τ−t)} − 1) / (e^{γM} − 1), 1)
//! ```
//!
//! The formula fixes the *marginal* retention law but not when deletion is
//! applied; re-applying it every step would compound and over-delete.
//! [`VolatileBuffer::advance`] therefore deletes each survivor with the
//! conditional probability `1 − S(τ,t)/S(τ,t−1)`, which reproduces the
//! marginal law exactly while keeping at most `M` records: at age `M` the
//! probability reaches 1 and eviction is certain.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::instruction::InstructionTriplet;
use crate::math;
use crate::scene::Scene;

/// Capacity, decay rate, and RNG seed of a buffer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BufferConfig {
    /// Maximum number of records held (M ≥ 1).
    pub capacity: u64,
    /// Decay rate γ ≥ 0; 0 selects the linear limit `age / M`.
    pub gamma: f64,
    pub seed: u64,
}

impl BufferConfig {
    pub fn validate(&self) -> Result<(), BufferError> {
        if self.capacity == 0 {
            return Err(BufferError::InvalidConfig("capacity must be at least 1"));
        }
        if self.gamma.is_nan() || self.gamma < 0.0 {
            return Err(BufferError::InvalidConfig("gamma must be non-negative"));
        }
        Ok(())
    }
}

/// A scene plus its generated instructions, stamped with its birth step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BufferRecord {
    pub birth_step: u64,
    pub scene: Scene,
    pub triplets: Vec<InstructionTriplet>,
}

/// Forgetting probability for a record born at `tau`, observed at step `t`.
///
/// Exactly 0 at age 0 and exactly 1 from age `M` on. For γ = 0 the 0/0 form
/// resolves to `age / M`. Evaluated as
/// `e^{γ(age−M)} · (1 − e^{−γ·age}) / (1 − e^{−γM})`, which is algebraically
/// identical and stays finite for any γ·M.
pub fn forget_probability(tau: u64, t: u64, config: &BufferConfig) -> Result<f64, BufferError> {
    if tau > t {
        return Err(BufferError::FutureBirth { tau, t });
    }
    config.validate()?;
    let age = (t - tau) as f64;
    let m = config.capacity as f64;
    if age >= m {
        return Ok(1.0);
    }
    if config.gamma == 0.0 {
        return Ok(age / m);
    }
    let g = config.gamma;
    let p = math::exp(g * (age - m)) * (-math::exp_m1(-g * age)) / (-math::exp_m1(-g * m));
    Ok(p.clamp(0.0, 1.0))
}

/// RNG position of a buffer, sufficient to resume bit-reproducibly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BufferRngState {
    pub seed: u64,
    pub word_pos: u128,
}

/// What one `advance` evicted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvictionReport {
    pub step: u64,
    /// Birth steps of the evicted records, ascending.
    pub evicted: Vec<u64>,
}

/// The probabilistic volatile buffer. Single writer: `advance` is exclusive;
/// snapshots copy out.
#[derive(Debug, Clone)]
pub struct VolatileBuffer {
    config: BufferConfig,
    current_step: u64,
    records: Vec<BufferRecord>,
    rng: ChaCha8Rng,
}

impl VolatileBuffer {
    pub fn new(config: BufferConfig) -> Result<Self, BufferError> {
        config.validate()?;
        Ok(Self {
            config,
            current_step: 0,
            records: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
        })
    }

    /// Rebuild a buffer from persisted state. Records must be sorted by
    /// birth step and younger than `capacity`.
    pub fn restore(
        config: BufferConfig,
        current_step: u64,
        records: Vec<BufferRecord>,
        rng_state: BufferRngState,
    ) -> Result<Self, BufferError> {
        config.validate()?;
        if rng_state.seed != config.seed {
            return Err(BufferError::InvalidConfig("rng seed does not match config"));
        }
        for pair in records.windows(2) {
            if pair[0].birth_step >= pair[1].birth_step {
                return Err(BufferError::InvalidConfig(
                    "records must be strictly ordered by birth step",
                ));
            }
        }
        if let Some(last) = records.last() {
            if last.birth_step > current_step {
                return Err(BufferError::FutureBirth {
                    tau: last.birth_step,
                    t: current_step,
                });
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_word_pos(rng_state.word_pos);
        Ok(Self {
            config,
            current_step,
            records,
            rng,
        })
    }

    pub fn config(&self) -> &BufferConfig {
        &self.config
    }

    pub fn current_step(&self) -> u64 {
        self.current_step
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn rng_state(&self) -> BufferRngState {
        BufferRngState {
            seed: self.config.seed,
            word_pos: self.rng.get_word_pos(),
        }
    }

    /// Step the buffer to `new_record.birth_step`, applying one round of
    /// conditional forgetting to the survivors and inserting the new record.
    ///
    /// One uniform draw is consumed per retained record, in birth order, so
    /// the eviction history is a pure function of (seed, record sequence).
    pub fn advance(&mut self, new_record: BufferRecord) -> Result<EvictionReport, BufferError> {
        let t = self.current_step + 1;
        if new_record.birth_step != t {
            return Err(BufferError::NonMonotonicStep {
                expected: t,
                got: new_record.birth_step,
            });
        }
        let mut evicted = Vec::new();
        let mut kept = Vec::with_capacity(self.records.len() + 1);
        for record in self.records.drain(..) {
            let survive_now = 1.0 - forget_probability(record.birth_step, t, &self.config)?;
            let survived_before = 1.0 - forget_probability(record.birth_step, t - 1, &self.config)?;
            debug_assert!(
                survived_before > 0.0,
                "record should have been evicted earlier"
            );
            let delete = 1.0 - survive_now / survived_before;
            if self.rng.gen::<f64>() < delete {
                evicted.push(record.birth_step);
            } else {
                kept.push(record);
            }
        }
        kept.push(new_record);
        self.records = kept;
        self.current_step = t;
        Ok(EvictionReport { step: t, evicted })
    }

    /// Immutable copy of the retained records, ordered by birth step.
    pub fn snapshot(&self) -> Vec<BufferRecord> {
        self.records.clone()
    }

    /// Retained records without copying, ordered by birth step.
    pub fn records(&self) -> &[BufferRecord] {
        &self.records
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum BufferError {
    #[error("record born at {tau} is in the future of step {t}")]
    FutureBirth { tau: u64, t: u64 },
    #[error("advance expected birth step {expected}, got {got}")]
    NonMonotonicStep { expected: u64, got: u64 },
    #[error("invalid buffer config: {0}")]
    InvalidConfig(&'static str),
}
