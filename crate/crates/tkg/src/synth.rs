//! Seeded generator for a bilingual pair of temporal knowledge graphs.
//!
//! A latent "world" event stream is produced from a clustered relational
//! model with temporal recurrence. The source graph observes the world over
//! the training span; the target graph copies world events through the hidden
//! entity correspondence with probability `copy_prob` and adds its own events
//! from the same model. The training span of the target is then subsampled.

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::align::{AlignmentPair, AlignmentSet};
use crate::error::{Result, TkgError};
use crate::graph::{EntityId, Quadruple, RelationId, TemporalKG, TimeStep};
use crate::split::{split_by_time, subsample_events, SplitSpec};
use crate::vocab::Vocab;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub source_entities: usize,
    pub target_entities: usize,
    pub relations: usize,
    pub split: SplitSpec,
    pub events_per_step: usize,
    /// Probability that a world event is copied into the target graph.
    pub copy_prob: f64,
    /// Fraction of target entities with a disclosed alignment.
    pub coverage: f64,
    /// Fraction of target training events kept in the incomplete graph.
    pub target_ratio: f64,
    pub clusters: usize,
    /// Probability of re-emitting a recent event instead of a fresh one.
    pub repeat_prob: f64,
    pub repeat_window: TimeStep,
    pub relations_per_entity: usize,
    pub partners_per_relation: usize,
    /// Probability that a fresh event picks a preferred partner as object.
    pub partner_prob: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            source_entities: 200,
            target_entities: 200,
            relations: 20,
            split: SplitSpec::default(),
            events_per_step: 60,
            copy_prob: 0.6,
            coverage: 0.1,
            target_ratio: 0.2,
            clusters: 8,
            repeat_prob: 0.4,
            repeat_window: 3,
            relations_per_entity: 3,
            partners_per_relation: 2,
            partner_prob: 0.7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(TkgError::InfeasibleConfig(m.to_string()));
        self.split.validate()?;
        if self.source_entities == 0 || self.target_entities == 0 {
            return bad("entity counts must be positive");
        }
        if self.target_entities > self.source_entities {
            return bad("target entities must not exceed source entities");
        }
        if self.relations == 0 || self.clusters == 0 {
            return bad("relation and cluster counts must be positive");
        }
        if !(0.0..=1.0).contains(&self.coverage) {
            return bad("coverage must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.copy_prob)
            || !(0.0..=1.0).contains(&self.repeat_prob)
            || !(0.0..=1.0).contains(&self.partner_prob)
        {
            return bad("probabilities must lie in [0, 1]");
        }
        if !(self.target_ratio > 0.0 && self.target_ratio <= 1.0) {
            return bad("target ratio must lie in (0, 1]");
        }
        if self.relations_per_entity == 0 || self.partners_per_relation == 0 {
            return bad("preference counts must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticPair {
    pub source: TemporalKG,
    pub target_full: TemporalKG,
    /// Subsampled training span plus the complete validation/test spans.
    pub target_incomplete: TemporalKG,
    pub alignments: AlignmentSet,
    /// Hidden correspondence: `counterpart[target] = source`.
    pub counterpart: Vec<EntityId>,
}

impl SyntheticPair {
    pub fn is_correct(&self, source: EntityId, target: EntityId) -> bool {
        self.counterpart.get(target) == Some(&source)
    }
}

struct World {
    cluster: Vec<usize>,
    shift: Vec<usize>,
    prefs: Vec<Vec<RelationId>>,
    partners: Vec<Vec<Vec<EntityId>>>,
    clusters: usize,
}

impl World {
    fn build(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Self {
        let n = cfg.source_entities;
        let k = cfg.clusters;
        let cluster: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
        let shift: Vec<usize> = (0..cfg.relations)
            .map(|_| if k > 1 { rng.gen_range(1..k) } else { 0 })
            .collect();
        let mut members = vec![Vec::new(); k];
        for (e, &c) in cluster.iter().enumerate() {
            members[c].push(e);
        }
        let per = cfg.relations_per_entity.min(cfg.relations);
        let prefs: Vec<Vec<RelationId>> = (0..n)
            .map(|_| index::sample(rng, cfg.relations, per).into_vec())
            .collect();
        let partners = (0..n)
            .map(|e| {
                prefs[e]
                    .iter()
                    .map(|&r| {
                        let pool = &members[(cluster[e] + shift[r]) % k];
                        (0..cfg.partners_per_relation)
                            .map(|_| {
                                if pool.is_empty() {
                                    rng.gen_range(0..n)
                                } else {
                                    pool[rng.gen_range(0..pool.len())]
                                }
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Self {
            cluster,
            shift,
            prefs,
            partners,
            clusters: k,
        }
    }

    /// A fresh event whose endpoints are drawn from `allowed` (sorted ids).
    fn fresh(
        &self,
        cfg: &SynthConfig,
        rng: &mut ChaCha8Rng,
        allowed: &[EntityId],
        members: &[Vec<EntityId>],
        is_allowed: &[bool],
    ) -> (EntityId, RelationId, EntityId) {
        let s = allowed[rng.gen_range(0..allowed.len())];
        let slot = rng.gen_range(0..self.prefs[s].len());
        let r = self.prefs[s][slot];
        let partner = self.partners[s][slot][rng.gen_range(0..cfg.partners_per_relation)];
        let o = if rng.gen::<f64>() < cfg.partner_prob && is_allowed[partner] {
            partner
        } else {
            let pool = &members[(self.cluster[s] + self.shift[r]) % self.clusters];
            if pool.is_empty() {
                allowed[rng.gen_range(0..allowed.len())]
            } else {
                pool[rng.gen_range(0..pool.len())]
            }
        };
        (s, r, o)
    }

    fn stream(
        &self,
        cfg: &SynthConfig,
        rng: &mut ChaCha8Rng,
        per_step: usize,
        allowed: &[EntityId],
    ) -> Vec<Quadruple> {
        let mut is_allowed = vec![false; cfg.source_entities];
        for &e in allowed {
            is_allowed[e] = true;
        }
        let mut members = vec![Vec::new(); self.clusters];
        for &e in allowed {
            members[self.cluster[e]].push(e);
        }
        let mut out: Vec<Quadruple> = Vec::new();
        let mut step_start = Vec::new();
        for t in 0..cfg.split.total_steps {
            step_start.push(out.len());
            let lo = step_start[t.saturating_sub(cfg.repeat_window) as usize];
            let hi = out.len();
            for _ in 0..per_step {
                if hi > lo && rng.gen::<f64>() < cfg.repeat_prob {
                    let prev = out[rng.gen_range(lo..hi)];
                    out.push(Quadruple { time: t, ..prev });
                } else {
                    let (s, r, o) = self.fresh(cfg, rng, allowed, &members, &is_allowed);
                    out.push(Quadruple::new(s, r, o, t));
                }
            }
        }
        out
    }
}

fn sub_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn generate_synthetic_pair(cfg: &SynthConfig, seed: u64) -> Result<SyntheticPair> {
    cfg.validate()?;
    let mut structure_rng = sub_rng(seed, 0);
    let world = World::build(cfg, &mut structure_rng);

    let mut ids: Vec<EntityId> = (0..cfg.source_entities).collect();
    ids.shuffle(&mut structure_rng);
    let counterpart: Vec<EntityId> = ids[..cfg.target_entities].to_vec();
    let mut target_of = vec![None; cfg.source_entities];
    for (t, &s) in counterpart.iter().enumerate() {
        target_of[s] = Some(t);
    }

    let everyone: Vec<EntityId> = (0..cfg.source_entities).collect();
    let world_events = world.stream(cfg, &mut sub_rng(seed, 1), cfg.events_per_step, &everyone);

    let relations = Vocab::numbered("r", cfg.relations);
    let source_quads = world_events
        .iter()
        .copied()
        .filter(|q| q.time < cfg.split.train_steps)
        .collect();
    let source = TemporalKG::new(
        Vocab::numbered("s", cfg.source_entities),
        relations.clone(),
        source_quads,
        cfg.split.train_steps,
    )?;

    let map = |q: &Quadruple| -> Option<Quadruple> {
        Some(Quadruple::new(target_of[q.subject]?, q.relation, target_of[q.object]?, q.time))
    };
    let mut copy_rng = sub_rng(seed, 2);
    let copied: Vec<Quadruple> = world_events
        .iter()
        .filter(|_| copy_rng.gen::<f64>() < cfg.copy_prob)
        .filter_map(map)
        .collect();
    let mut with_counterpart = counterpart.clone();
    with_counterpart.sort_unstable();
    let own_per_step = (cfg.events_per_step as f64 * (1.0 - cfg.copy_prob)).round() as usize;
    let own: Vec<Quadruple> = world
        .stream(cfg, &mut sub_rng(seed, 3), own_per_step, &with_counterpart)
        .iter()
        .filter_map(map)
        .collect();

    let mut target_quads = copied;
    target_quads.extend(own);
    target_quads.sort_by_key(|q| q.time);
    let target_full = TemporalKG::new(
        Vocab::numbered("t", cfg.target_entities),
        relations,
        target_quads,
        cfg.split.total_steps,
    )?;

    let parts = split_by_time(&target_full, &cfg.split)?;
    let thinned = subsample_events(&parts.train, cfg.target_ratio, seed ^ 0x5eed_0004)?;
    let mut incomplete = thinned.quadruples().to_vec();
    incomplete.extend_from_slice(parts.val.quadruples());
    incomplete.extend_from_slice(parts.test.quadruples());
    let target_incomplete = target_full.with_quadruples(incomplete)?;

    let n_aligned = (cfg.coverage * cfg.target_entities as f64).round() as usize;
    let mut chosen = index::sample(&mut sub_rng(seed, 5), cfg.target_entities, n_aligned).into_vec();
    chosen.sort_unstable();
    let alignments = chosen
        .into_iter()
        .map(|t| AlignmentPair::ground_truth(counterpart[t], t))
        .collect();

    Ok(SyntheticPair {
        source,
        target_full,
        target_incomplete,
        alignments,
        counterpart,
    })
}
