use std::collections::BTreeSet;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, TkgError};
use crate::graph::EntityId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Provenance {
    GroundTruth,
    Pseudo,
}

/// A cross-lingual entity pair. Ground-truth pairs carry confidence 1.0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignmentPair {
    pub source: EntityId,
    pub target: EntityId,
    pub provenance: Provenance,
    pub confidence: f64,
}

impl AlignmentPair {
    pub fn ground_truth(source: EntityId, target: EntityId) -> Self {
        Self {
            source,
            target,
            provenance: Provenance::GroundTruth,
            confidence: 1.0,
        }
    }

    pub fn pseudo(source: EntityId, target: EntityId, confidence: f64) -> Self {
        Self {
            source,
            target,
            provenance: Provenance::Pseudo,
            confidence,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AlignmentSet {
    pairs: Vec<AlignmentPair>,
}

impl AlignmentSet {
    pub fn new(pairs: Vec<AlignmentPair>) -> Self {
        Self { pairs }
    }

    pub fn pairs(&self) -> &[AlignmentPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn push(&mut self, pair: AlignmentPair) {
        self.pairs.push(pair);
    }

    pub fn iter(&self) -> impl Iterator<Item = &AlignmentPair> {
        self.pairs.iter()
    }

    pub fn targets(&self) -> BTreeSet<EntityId> {
        self.pairs.iter().map(|p| p.target).collect()
    }

    pub fn sources(&self) -> BTreeSet<EntityId> {
        self.pairs.iter().map(|p| p.source).collect()
    }

    pub fn target_of(&self, source: EntityId) -> Option<EntityId> {
        self.pairs.iter().find(|p| p.source == source).map(|p| p.target)
    }

    pub fn source_of(&self, target: EntityId) -> Option<EntityId> {
        self.pairs.iter().find(|p| p.target == target).map(|p| p.source)
    }
}

impl FromIterator<AlignmentPair> for AlignmentSet {
    fn from_iter<I: IntoIterator<Item = AlignmentPair>>(iter: I) -> Self {
        Self::new(iter.into_iter().collect())
    }
}

/// Corrupts `round(noise_ratio * len)` pairs by moving their target to an
/// entity that is unaligned at the moment of the draw. Provenance is kept, so
/// the corruption is invisible downstream.
pub fn inject_alignment_noise(
    alignments: &AlignmentSet,
    noise_ratio: f64,
    target_vocab_size: usize,
    seed: u64,
) -> Result<AlignmentSet> {
    if !(0.0..=1.0).contains(&noise_ratio) || noise_ratio.is_nan() {
        return Err(TkgError::BadRatio(noise_ratio));
    }
    let n = alignments.len();
    let count = (noise_ratio * n as f64).round() as usize;
    let mut out = alignments.clone();
    if count == 0 {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let aligned = alignments.targets();
    let mut pool: Vec<EntityId> = (0..target_vocab_size)
        .filter(|e| !aligned.contains(e))
        .collect();
    let mut chosen = index::sample(&mut rng, n, count).into_vec();
    chosen.sort_unstable();
    for i in chosen {
        if pool.is_empty() {
            return Err(TkgError::NoUnalignedTargets);
        }
        let k = rng.gen_range(0..pool.len());
        let fresh = pool.swap_remove(k);
        let old = std::mem::replace(&mut out.pairs[i].target, fresh);
        pool.push(old);
    }
    Ok(out)
}
