//! Teacher pretraining, student initialization, the weighted objective over
//! ground-truth and pseudo data, and the alternating training loop.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tkg::{AlignmentPair, AlignmentSet, EntityId, History, Provenance, Quadruple, TemporalKG, TimeStep, Vocab};

use crate::alignment::{
    alignment_loss, integrate_with_tape, sample_alignment_negatives, AlignParams, AlignSample, Strength,
    TemporalIntegration,
};
use crate::config::TrainConfig;
use crate::distill::{
    audit_lines, candidate_targets, generate_pseudo_alignments, mean_similarity, similarity_table, transfer_events,
    Budget, PseudoAction, PseudoGenConfig, TransferRecord,
};
use crate::encoder::{encode_trajectories, EncodeCache, EncoderConfig, NetworkParams};
use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::numerics::{adam_step, axpy, AdamState, DenseMatrix, ParamSet, Real};
use crate::scoring::{reasoning_loss_on, sample_instances, CorruptMode, Instance, NegativeSamplerConfig};

/// Mixes a run seed with stream labels into an independent seed.
pub fn sub_seed(seed: u64, parts: &[u64]) -> u64 {
    // splitmix64 finalizer applied per part
    let mix = |mut z: u64| {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    };
    parts.iter().fold(mix(seed), |acc, &p| mix(acc ^ mix(p)))
}

const STREAM_TEACHER: u64 = 1;
const STREAM_STUDENT: u64 = 2;
const STREAM_ALIGN: u64 = 3;
const STREAM_ALIGN_STEP: u64 = 4;
const STREAM_BATCH: u64 = 5;
const STREAM_DROPOUT: u64 = 6;
const STREAM_SHUFFLE: u64 = 7;

pub fn encoder_config(cfg: &TrainConfig) -> EncoderConfig {
    EncoderConfig {
        neighbors: cfg.neighbors,
        layers: cfg.layers,
    }
}

fn negative_config(cfg: &TrainConfig, seed: u64) -> NegativeSamplerConfig {
    NegativeSamplerConfig {
        factor: cfg.reasoning_negatives,
        corrupt_mode: CorruptMode::BothSides,
        seed,
    }
}

fn check_finite(value: f64, epoch: usize, phase: &'static str) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::Diverged { epoch, phase, loss: value })
    }
}

/// One pass of the reasoning loss over `quads` in shuffled batches; returns
/// the mean batch loss.
fn reasoning_epoch<T: Real, H: History + ?Sized>(
    params: &mut NetworkParams<T>,
    adam: &mut AdamState<T>,
    history: &H,
    quads: &[Quadruple],
    cfg: &TrainConfig,
    stream: u64,
    epoch: usize,
) -> Result<f64> {
    let mut order: Vec<Quadruple> = quads.to_vec();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(sub_seed(cfg.seed, &[stream, STREAM_SHUFFLE, epoch as u64])));
    let enc = encoder_config(cfg);
    let margin = T::lit(cfg.margin_reasoning);
    let mut total = 0.0;
    let mut batches = 0;
    for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
        let key = [stream, epoch as u64, b as u64];
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(cfg.seed, &[STREAM_BATCH, key[0], key[1], key[2]]));
        let instances = sample_instances(params, batch, &negative_config(cfg, 0), &mut rng)?;
        let dropout = sub_seed(cfg.seed, &[STREAM_DROPOUT, key[0], key[1], key[2]]);
        let mut grads = params.zeros_like();
        let value = {
            let mut cache = EncodeCache::new(&*params, history, enc, Some(dropout));
            let v = reasoning_loss_on(&mut cache, &instances, margin, T::one())?;
            cache.backward(&mut grads);
            v.value.as_f64()
        };
        check_finite(value, epoch, "teacher")?;
        adam_step(params, &grads, adam, T::lit(cfg.learning_rate))?;
        total += value;
        batches += 1;
    }
    Ok(if batches == 0 { 0.0 } else { total / batches as f64 })
}

/// Teacher trained on the source graph, with its per-epoch mean loss.
pub fn pretrain_teacher<T: Real>(source: &TemporalKG, cfg: &TrainConfig) -> Result<(NetworkParams<T>, Vec<f64>)> {
    cfg.validate()?;
    if source.is_empty() {
        return Err(Error::Empty("source graph"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(cfg.seed, &[STREAM_TEACHER]));
    let mut params = NetworkParams::init(source.entities().len(), source.relations().len(), cfg.dim, cfg.dropout, &mut rng);
    let mut adam = AdamState::default();
    let mut trace = Vec::with_capacity(cfg.teacher_epochs);
    for epoch in 0..cfg.teacher_epochs {
        trace.push(reasoning_epoch(&mut params, &mut adam, source, source.quadruples(), cfg, STREAM_TEACHER, epoch)?);
    }
    Ok((params, trace))
}

/// Student sharing the teacher's transform, attention, time frequencies and
/// relation rows (matched by name); entity rows are freshly drawn.
pub fn init_student_from_teacher<T: Real>(
    teacher: &NetworkParams<T>,
    teacher_relations: &Vocab,
    target_entities: usize,
    target_relations: &Vocab,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<NetworkParams<T>> {
    let d = teacher.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, &[STREAM_STUDENT]));
    let bound = 6.0 / (d as f64).sqrt();
    use rand::Rng;
    let entity_emb = DenseMatrix::from_fn(target_entities, d, |_, _| T::lit(rng.gen_range(-bound..=bound)));
    let rt = target_relations.len();
    let mut relation_emb = DenseMatrix::zeros(2 * rt, d);
    for (r, name) in target_relations.names().iter().enumerate() {
        let src = teacher_relations
            .get(name)
            .ok_or_else(|| Error::Config(format!("relation '{name}' is missing from the source vocabulary")))?;
        relation_emb.row_mut(r).copy_from_slice(teacher.relation_emb.row(src));
        relation_emb
            .row_mut(r + rt)
            .copy_from_slice(teacher.relation_emb.row(teacher.inverse_relation(src)));
    }
    Ok(NetworkParams {
        entity_emb,
        relation_emb,
        transform: teacher.transform.clone(),
        attn: teacher.attn.clone(),
        time_freq: teacher.time_freq.clone(),
        dropout: cfg.dropout,
        base_relations: rt,
    })
}

/// Copies the teacher row of each aligned source into its target row.
pub fn warm_start<T: Real>(student: &mut NetworkParams<T>, teacher_entities: &DenseMatrix<T>, alignments: &AlignmentSet) {
    for p in alignments.iter() {
        student.entity_emb.row_mut(p.target).copy_from_slice(teacher_entities.row(p.source));
    }
}

/// Term weights of the objective; each pair sums to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub graph: f64,
    pub graph_st: f64,
    pub align: f64,
    pub align_st: f64,
}

impl LossWeights {
    /// `|G|/(|G|+|G_ST|)` and so on; an empty pair contributes weights 0.
    pub fn from_sizes(graph: usize, graph_st: usize, align: usize, align_st: usize) -> Result<Self> {
        if graph + graph_st + align + align_st == 0 {
            return Err(Error::Empty("training sets"));
        }
        let split = |a: usize, b: usize| {
            if a + b == 0 {
                (0.0, 0.0)
            } else {
                let n = (a + b) as f64;
                (a as f64 / n, b as f64 / n)
            }
        };
        let (g, gs) = split(graph, graph_st);
        let (a, as_) = split(align, align_st);
        Ok(Self {
            graph: g,
            graph_st: gs,
            align: a,
            align_st: as_,
        })
    }
}

/// Examples for the four terms of one optimization step.
#[derive(Debug, Clone, Copy)]
pub struct CombinedBatch<'a> {
    pub graph: &'a [Instance],
    pub graph_st: &'a [Instance],
    pub align: &'a [AlignSample],
    pub align_st: &'a [AlignSample],
}

/// Strength weighting for the two alignment terms.
#[derive(Debug, Clone, Copy)]
pub enum StrengthChoice<'a, T> {
    Adaptive,
    Uniform,
    Fixed { align: &'a [Vec<T>], align_st: &'a [Vec<T>] },
}

#[derive(Debug, Clone)]
pub struct CombinedOutput<T> {
    pub value: T,
    /// Unweighted graph, pseudo graph, alignment and pseudo alignment terms.
    pub terms: [T; 4],
    pub kink_gap: T,
    pub student: NetworkParams<T>,
    pub align: AlignParams<T>,
}

/// Margins of the reasoning and alignment hinges.
#[derive(Debug, Clone, Copy)]
pub struct Margins<T> {
    pub reasoning: T,
    pub alignment: T,
}

/// Weighted sum of the four terms with gradients for the student and the
/// alignment transforms. Source trajectories are constants.
#[allow(clippy::too_many_arguments)]
pub fn combined_loss<T: Real, H: History + ?Sized>(
    student: &NetworkParams<T>,
    align: &AlignParams<T>,
    teacher_traj: &BTreeMap<EntityId, Vec<Vec<T>>>,
    history: &H,
    enc: &EncoderConfig,
    horizon: TimeStep,
    batch: CombinedBatch<'_>,
    weights: &LossWeights,
    margins: Margins<T>,
    strength: StrengthChoice<'_, T>,
    dropout_seed: Option<u64>,
) -> Result<CombinedOutput<T>> {
    let mut cache = EncodeCache::new(student, history, *enc, dropout_seed);
    let mut terms = [T::zero(); 4];
    let mut gap = T::infinity();
    let mut align_grads = align.zeros_like();
    let graph_terms = [(batch.graph, weights.graph), (batch.graph_st, weights.graph_st)];
    for (i, (instances, w)) in graph_terms.into_iter().enumerate() {
        if w > 0.0 && !instances.is_empty() {
            let v = reasoning_loss_on(&mut cache, instances, margins.reasoning, T::lit(w))?;
            terms[i] = v.value;
            gap = gap.min(v.kink_gap);
        }
    }
    let align_terms = [(batch.align, weights.align), (batch.align_st, weights.align_st)];
    if align_terms.iter().any(|(s, w)| *w > 0.0 && !s.is_empty()) {
        let needed: BTreeSet<EntityId> = align_terms
            .iter()
            .flat_map(|(s, _)| s.iter())
            .flat_map(|s| std::iter::once(s.target).chain(s.negatives.iter().copied()))
            .collect();
        let mut slots: BTreeMap<EntityId, Vec<usize>> = BTreeMap::new();
        let mut targets: BTreeMap<EntityId, Vec<Vec<T>>> = BTreeMap::new();
        for &e in &needed {
            let ids = (1..=horizon).map(|t| cache.encode(e, t)).collect::<Result<Vec<_>>>()?;
            targets.insert(e, ids.iter().map(|&s| cache.output(s).to_vec()).collect());
            slots.insert(e, ids);
        }
        for (i, (samples, w)) in align_terms.into_iter().enumerate() {
            if w <= 0.0 || samples.is_empty() {
                continue;
            }
            let s = match strength {
                StrengthChoice::Adaptive => Strength::Adaptive,
                StrengthChoice::Uniform => Strength::Uniform,
                StrengthChoice::Fixed { align, align_st } => Strength::Fixed(if i == 0 { align } else { align_st }),
            };
            let out = alignment_loss(align, teacher_traj, &targets, samples, margins.alignment, s)?;
            let w = T::lit(w);
            terms[2 + i] = out.value.value;
            gap = gap.min(out.value.kink_gap);
            for (dst, src) in align_grads.blocks_mut().into_iter().zip(out.grad_params.blocks()) {
                axpy(w, src, dst);
            }
            for (e, g) in &out.grad_targets {
                for (slot, row) in slots[e].iter().zip(g) {
                    cache.accumulate(*slot, row, w);
                }
            }
        }
    }
    let w = [weights.graph, weights.graph_st, weights.align, weights.align_st];
    let value = terms.iter().zip(w).fold(T::zero(), |acc, (&t, w)| acc + T::lit(w) * t);
    let mut student_grads = student.zeros_like();
    cache.backward(&mut student_grads);
    Ok(CombinedOutput {
        value,
        terms,
        kink_gap: gap.min(cache.relu_gap()),
        student: student_grads,
        align: align_grads,
    })
}

/// Student and alignment parameters viewed as one set.
#[derive(Debug, Clone, PartialEq)]
pub struct JointParams<T> {
    pub student: NetworkParams<T>,
    pub align: AlignParams<T>,
}

impl<T: Real> ParamSet<T> for JointParams<T> {
    fn blocks(&self) -> Vec<&[T]> {
        let mut b = self.student.blocks();
        b.extend(self.align.blocks());
        b
    }

    fn blocks_mut(&mut self) -> Vec<&mut [T]> {
        let mut b = self.student.blocks_mut();
        b.extend(self.align.blocks_mut());
        b
    }
}

/// One line of the progress log.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub phase: &'static str,
    pub loss: f64,
    pub val_mrr: f64,
    pub pseudo_count: usize,
    pub transferred_count: usize,
}

pub const LOG_HEADER: &str = "epoch\tphase\tloss\tval_mrr\tpseudo_count\ttransferred_count";

impl EpochLog {
    pub fn tsv(&self) -> String {
        format!(
            "{}\t{}\t{:.6}\t{:.6}\t{}\t{}",
            self.epoch, self.phase, self.loss, self.val_mrr, self.pseudo_count, self.transferred_count
        )
    }
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct TrainState<T> {
    pub teacher: NetworkParams<T>,
    pub student: NetworkParams<T>,
    pub align: AlignParams<T>,
    pub student_adam: AdamState<T>,
    pub align_adam: AdamState<T>,
    /// Ground-truth pairs still in use (replacements remove entries).
    pub ground_truth: AlignmentSet,
    pub pseudo: AlignmentSet,
    pub transferred: Vec<TransferRecord>,
    pub epoch: usize,
    pub trace: Vec<EpochLog>,
    pub audit: String,
    pub best_val_mrr: f64,
    pub best_epoch: usize,
}

impl<T: Real> TrainState<T> {
    pub fn log_tsv(&self) -> String {
        let mut s = String::from(LOG_HEADER);
        s.push('\n');
        for l in &self.trace {
            s.push_str(&l.tsv());
            s.push('\n');
        }
        s
    }

    /// Training graph of the target plus transferred events.
    pub fn augmented(&self, target: &TemporalKG) -> Result<TemporalKG> {
        Ok(target.extended(self.transferred.iter().map(|r| r.added))?)
    }
}

/// Data of one run: source and target training graphs share the relation
/// vocabulary by name; `train_steps` bounds every trajectory.
#[derive(Debug, Clone, Copy)]
pub struct TrainInputs<'a> {
    pub source: &'a TemporalKG,
    pub target: &'a TemporalKG,
    pub validation: &'a [Quadruple],
    pub alignments: &'a AlignmentSet,
    pub train_steps: TimeStep,
}

fn trajectories<T: Real, H: History + ?Sized>(
    params: &NetworkParams<T>,
    history: &H,
    entities: &[EntityId],
    steps: TimeStep,
    enc: &EncoderConfig,
) -> Result<BTreeMap<EntityId, Vec<Vec<T>>>> {
    let trajs = encode_trajectories(params, history, entities, steps, enc)?;
    Ok(entities.iter().copied().zip(trajs).collect())
}

fn integrations<T: Real>(
    align: &AlignParams<T>,
    trajs: &BTreeMap<EntityId, Vec<Vec<T>>>,
    entities: &[EntityId],
) -> Result<Vec<(EntityId, TemporalIntegration<T>)>> {
    use rayon::prelude::*;
    entities
        .par_iter()
        .map(|&e| {
            let traj = trajs.get(&e).ok_or(Error::UnknownId { kind: "trajectory", id: e })?;
            Ok((e, integrate_with_tape(align, traj)?.output().clone()))
        })
        .collect()
}

fn pairs_of(set: &AlignmentSet) -> Vec<(EntityId, EntityId)> {
    set.iter().map(|p| (p.source, p.target)).collect()
}

/// Pseudo pairs that never compete with ground truth for negatives.
fn exclusion(pseudo: &AlignmentSet) -> AlignmentSet {
    pseudo.iter().filter(|p| p.provenance == Provenance::Pseudo).cloned().collect()
}

struct Loop<'a, T: Real> {
    cfg: &'a TrainConfig,
    inputs: TrainInputs<'a>,
    enc: EncoderConfig,
    teacher_traj: BTreeMap<EntityId, Vec<Vec<T>>>,
    state: TrainState<T>,
    augmented: TemporalKG,
}

impl<'a, T: Real> Loop<'a, T> {
    fn strength(&self) -> StrengthChoice<'static, T> {
        if self.cfg.uniform_strength {
            StrengthChoice::Uniform
        } else {
            StrengthChoice::Adaptive
        }
    }

    fn align_samples(&self, rng: &mut ChaCha8Rng) -> (Vec<AlignSample>, Vec<AlignSample>) {
        let n = self.inputs.target.entities().len();
        let ex = exclusion(&self.state.pseudo);
        let f = self.cfg.alignment_negatives;
        (
            sample_alignment_negatives(&pairs_of(&self.state.ground_truth), n, f, &ex, rng),
            sample_alignment_negatives(&pairs_of(&self.state.pseudo), n, f, &ex, rng),
        )
    }

    /// Optimizes the alignment transforms on frozen trajectories.
    fn align_phase(&mut self, epoch: usize, weights: &LossWeights) -> Result<f64> {
        if self.cfg.align_steps == 0 || self.state.ground_truth.len() + self.state.pseudo.len() == 0 {
            return Ok(0.0);
        }
        let all: Vec<EntityId> = (0..self.inputs.target.entities().len()).collect();
        let student_traj = trajectories(&self.state.student, &self.augmented, &all, self.inputs.train_steps, &self.enc)?;
        let strength = match self.strength() {
            StrengthChoice::Uniform => Strength::Uniform,
            _ => Strength::Adaptive,
        };
        let margin = T::lit(self.cfg.margin_alignment);
        let mut last = 0.0;
        for step in 0..self.cfg.align_steps {
            let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(self.cfg.seed, &[STREAM_ALIGN_STEP, epoch as u64, step as u64]));
            let (gt, st) = self.align_samples(&mut rng);
            let mut grads = self.state.align.zeros_like();
            let mut value = 0.0;
            for (samples, w) in [(&gt, weights.align), (&st, weights.align_st)] {
                if w <= 0.0 || samples.is_empty() {
                    continue;
                }
                let out = alignment_loss(&self.state.align, &self.teacher_traj, &student_traj, samples, margin, strength)?;
                value += w * out.value.value.as_f64();
                for (dst, src) in grads.blocks_mut().into_iter().zip(out.grad_params.blocks()) {
                    axpy(T::lit(w), src, dst);
                }
            }
            check_finite(value, epoch, "align")?;
            adam_step(&mut self.state.align, &grads, &mut self.state.align_adam, T::lit(self.cfg.learning_rate))?;
            last = value;
        }
        Ok(last)
    }

    fn transfer_phase(&mut self, epoch: usize) -> Result<()> {
        if self.cfg.pure_training || self.cfg.no_event_transfer {
            return Ok(());
        }
        let alignments: AlignmentSet = self.state.ground_truth.iter().chain(self.state.pseudo.iter()).cloned().collect();
        if alignments.is_empty() {
            return Ok(());
        }
        let complete = !self.cfg.transfer_after_warmup || epoch >= self.cfg.warmup_epochs;
        let fresh = transfer_events(
            self.inputs.source,
            &self.augmented,
            &self.augmented,
            &alignments,
            &self.state.student,
            &self.enc,
            self.inputs.train_steps,
            epoch,
            &self.state.transferred,
            complete,
        )?;
        if !fresh.is_empty() {
            self.augmented = self.augmented.extended(fresh.iter().map(|r| r.added))?;
            self.state.transferred.extend(fresh);
        }
        Ok(())
    }

    /// Student updates over time intervals, most recent first.
    fn student_phase(&mut self, epoch: usize, weights: &LossWeights) -> Result<f64> {
        let steps = self.inputs.train_steps;
        let k = self.cfg.time_intervals as u64;
        let bounds: Vec<TimeStep> = (0..=k).map(|i| (i * steps as u64 / k) as TimeStep).collect();
        let margins = Margins {
            reasoning: T::lit(self.cfg.margin_reasoning),
            alignment: T::lit(self.cfg.margin_alignment),
        };
        let mut total = 0.0;
        let mut batches = 0usize;
        for interval in (0..k as usize).rev() {
            let (lo, hi) = (bounds[interval], bounds[interval + 1]);
            let inside = |q: &Quadruple| q.time >= lo && q.time < hi;
            let mut pool: Vec<(bool, Quadruple)> = self
                .inputs
                .target
                .quadruples()
                .iter()
                .filter(|q| inside(q))
                .map(|&q| (false, q))
                .chain(self.state.transferred.iter().map(|r| r.added).filter(inside).map(|q| (true, q)))
                .collect();
            if pool.is_empty() {
                continue;
            }
            let key = [epoch as u64, interval as u64];
            pool.shuffle(&mut ChaCha8Rng::seed_from_u64(sub_seed(self.cfg.seed, &[STREAM_SHUFFLE, STREAM_STUDENT, key[0], key[1]])));
            for (b, chunk) in pool.chunks(self.cfg.batch_size).enumerate() {
                let tag = [STREAM_BATCH, STREAM_STUDENT, key[0], key[1], b as u64];
                let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(self.cfg.seed, &tag));
                let gt: Vec<Quadruple> = chunk.iter().filter(|c| !c.0).map(|c| c.1).collect();
                let st: Vec<Quadruple> = chunk.iter().filter(|c| c.0).map(|c| c.1).collect();
                let neg = negative_config(self.cfg, 0);
                let gi = sample_instances(&self.state.student, &gt, &neg, &mut rng)?;
                let si = sample_instances(&self.state.student, &st, &neg, &mut rng)?;
                let (ga, sa) = self.align_samples(&mut rng);
                let batch = CombinedBatch {
                    graph: &gi,
                    graph_st: &si,
                    align: &ga,
                    align_st: &sa,
                };
                let dropout = sub_seed(self.cfg.seed, &[STREAM_DROPOUT, STREAM_STUDENT, key[0], key[1], b as u64]);
                let out = combined_loss(
                    &self.state.student,
                    &self.state.align,
                    &self.teacher_traj,
                    &self.augmented,
                    &self.enc,
                    steps,
                    batch,
                    weights,
                    margins,
                    self.strength(),
                    Some(dropout),
                )?;
                let v = out.value.as_f64();
                check_finite(v, epoch, "student")?;
                adam_step(&mut self.state.student, &out.student, &mut self.state.student_adam, T::lit(self.cfg.learning_rate))?;
                total += v;
                batches += 1;
            }
        }
        Ok(if batches == 0 { 0.0 } else { total / batches as f64 })
    }

    /// Regenerates the pseudo set from mean similarities.
    fn pseudo_phase(&mut self, epoch: usize) -> Result<()> {
        if !self.cfg.generates_pseudo() {
            return Ok(());
        }
        let Some(fraction) = self.cfg.pseudo_fraction(epoch) else {
            return Ok(());
        };
        let n_targets = self.inputs.target.entities().len();
        let gt_sources = self.state.ground_truth.sources();
        let eligible: Vec<EntityId> = (0..self.inputs.source.entities().len()).filter(|e| !gt_sources.contains(e)).collect();
        let aligned: BTreeSet<EntityId> = self.state.ground_truth.targets().union(&self.state.pseudo.targets()).copied().collect();
        let candidates: Vec<EntityId> = candidate_targets(&self.augmented, &aligned).into_iter().collect();
        let held_targets: Vec<EntityId> = candidates
            .iter()
            .copied()
            .filter(|t| self.state.ground_truth.source_of(*t).is_some())
            .collect();
        if eligible.is_empty() || candidates.is_empty() || fraction == 0.0 {
            self.state.pseudo = AlignmentSet::default();
            return Ok(());
        }
        let student_traj = trajectories(&self.state.student, &self.augmented, &candidates, self.inputs.train_steps, &self.enc)?;
        let src = integrations(&self.state.align, &self.teacher_traj, &eligible)?;
        let tgt = integrations(&self.state.align, &student_traj, &candidates)?;
        let mut table = similarity_table(&src, &tgt)?;
        let tgt_map: BTreeMap<EntityId, &TemporalIntegration<T>> = tgt.iter().map(|(e, h)| (*e, h)).collect();
        for t in held_targets {
            let s = self.state.ground_truth.source_of(t).expect("held target");
            let hs = integrations(&self.state.align, &self.teacher_traj, &[s])?.remove(0).1;
            let sim = mean_similarity(&hs, tgt_map[&t]).map(|x| x.as_f64()).unwrap_or(0.0);
            table.held.insert(t, sim);
        }
        let gen = PseudoGenConfig {
            top_k_budget: Budget::Fraction(fraction),
            min_similarity: self.cfg.min_similarity,
            exact_solver_cap: self.cfg.exact_solver_cap,
            replace_existing: self.cfg.replace_existing,
        };
        let decisions = generate_pseudo_alignments(&table, &gen, &self.state.ground_truth, n_targets)?;
        for d in &decisions {
            if let PseudoAction::Replace { displaced } = d.action {
                let kept: AlignmentSet = self
                    .state
                    .ground_truth
                    .iter()
                    .filter(|p| !(p.source == displaced && p.target == d.pair.target))
                    .cloned()
                    .collect();
                self.state.ground_truth = kept;
            }
        }
        self.state.audit.push_str(&audit_lines(
            epoch,
            &decisions,
            self.inputs.source.entities(),
            self.inputs.target.entities(),
        ));
        self.state.pseudo = decisions.into_iter().map(|d| d.pair).collect::<Vec<AlignmentPair>>().into_iter().collect();
        Ok(())
    }

    fn validate(&self) -> Result<f64> {
        if self.inputs.validation.is_empty() {
            return Ok(0.0);
        }
        let history = self.augmented.extended(self.inputs.validation.iter().copied())?;
        Ok(evaluate(&self.state.student, &history, self.inputs.validation, &self.enc, "", self.cfg.seed)?.mrr)
    }
}

/// Alternates alignment, transfer, student and pseudo-generation phases.
///
/// Early stopping counts epochs without validation improvement once pseudo
/// generation has begun (or from the start when it never will); the returned
/// student is the best one seen on validation.
pub fn train_mpkd<T: Real>(inputs: TrainInputs<'_>, teacher: NetworkParams<T>, cfg: &TrainConfig) -> Result<TrainState<T>> {
    cfg.validate()?;
    if inputs.alignments.is_empty() && !cfg.pure_training {
        return Err(Error::Empty("alignment set"));
    }
    if inputs.train_steps == 0 {
        return Err(Error::Config("train_steps must be positive".into()));
    }
    let enc = encoder_config(cfg);
    let sources: Vec<EntityId> = (0..inputs.source.entities().len()).collect();
    let teacher_traj = trajectories(&teacher, inputs.source, &sources, inputs.train_steps, &enc)?;
    let student = init_student_from_teacher(
        &teacher,
        inputs.source.relations(),
        inputs.target.entities().len(),
        inputs.target.relations(),
        cfg,
        cfg.seed,
    )?;
    let mut student = student;
    if cfg.warm_start_aligned {
        warm_start(&mut student, &teacher.entity_emb, inputs.alignments);
    }
    let align = AlignParams::init(cfg.dim, cfg.align_init_noise, &mut ChaCha8Rng::seed_from_u64(sub_seed(cfg.seed, &[STREAM_ALIGN])));
    let state = TrainState {
        teacher,
        student: student.clone(),
        align,
        student_adam: AdamState::default(),
        align_adam: AdamState::default(),
        ground_truth: inputs.alignments.clone(),
        pseudo: AlignmentSet::default(),
        transferred: Vec::new(),
        epoch: 0,
        trace: Vec::new(),
        audit: String::new(),
        best_val_mrr: f64::NEG_INFINITY,
        best_epoch: 0,
    };
    let mut run = Loop {
        cfg,
        inputs,
        enc,
        teacher_traj,
        state,
        augmented: inputs.target.clone(),
    };
    let generation_starts = cfg.generates_pseudo();
    let patience_from = if generation_starts { cfg.warmup_epochs } else { 0 };
    let mut best = student;
    let mut stale = 0usize;
    for epoch in 0..cfg.epochs {
        let weights = LossWeights::from_sizes(
            inputs.target.len(),
            run.state.transferred.len(),
            run.state.ground_truth.len(),
            run.state.pseudo.len(),
        )?;
        run.align_phase(epoch, &weights)?;
        if !cfg.transfer_after_student {
            run.transfer_phase(epoch)?;
        }
        let loss = run.student_phase(epoch, &weights)?;
        if cfg.transfer_after_student {
            run.transfer_phase(epoch)?;
        }
        run.pseudo_phase(epoch)?;
        let val_mrr = run.validate()?;
        run.state.epoch = epoch + 1;
        run.state.trace.push(EpochLog {
            epoch,
            phase: "student",
            loss,
            val_mrr,
            pseudo_count: run.state.pseudo.len(),
            transferred_count: run.state.transferred.len(),
        });
        if val_mrr > run.state.best_val_mrr {
            run.state.best_val_mrr = val_mrr;
            run.state.best_epoch = epoch;
            best = run.state.student.clone();
            stale = 0;
        } else if epoch >= patience_from {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    run.state.student = best;
    Ok(run.state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tkg::{generate_synthetic_pair, split_by_time, SplitSpec, SynthConfig};

    use crate::encoder::encode_trajectories;
    use crate::scoring::reasoning_loss_on;

    pub(crate) fn toy_synth() -> SynthConfig {
        SynthConfig {
            source_entities: 30,
            target_entities: 30,
            relations: 4,
            split: SplitSpec::new(10, 6, 2, 2).unwrap(),
            events_per_step: 15,
            coverage: 0.2,
            target_ratio: 0.5,
            clusters: 4,
            ..Default::default()
        }
    }

    fn toy_cfg() -> TrainConfig {
        TrainConfig {
            dim: 8,
            batch_size: 32,
            epochs: 4,
            teacher_epochs: 2,
            warmup_epochs: 1,
            neighbors: 4,
            alignment_negatives: 4,
            align_steps: 1,
            learning_rate: 0.01,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn sub_seeds_are_stable_and_distinct() {
        assert_eq!(sub_seed(3, &[1, 2]), sub_seed(3, &[1, 2]));
        assert_ne!(sub_seed(3, &[1, 2]), sub_seed(3, &[2, 1]));
        assert_ne!(sub_seed(3, &[1]), sub_seed(4, &[1]));
    }

    #[test]
    fn loss_weight_examples() {
        let w = LossWeights::from_sizes(100, 300, 10, 0).unwrap();
        assert_eq!((w.graph, w.graph_st, w.align, w.align_st), (0.25, 0.75, 1.0, 0.0));
        assert!(LossWeights::from_sizes(0, 0, 0, 0).is_err());
        let w = LossWeights::from_sizes(7, 13, 3, 11).unwrap();
        assert_eq!(w.graph + w.graph_st, 1.0);
        assert_eq!(w.align + w.align_st, 1.0);
    }

    #[test]
    fn zero_epoch_teacher_is_initialization() {
        let pair = generate_synthetic_pair(&toy_synth(), 1).unwrap();
        let cfg = TrainConfig { teacher_epochs: 0, ..toy_cfg() };
        let (p, trace) = pretrain_teacher::<f64>(&pair.source, &cfg).unwrap();
        assert!(trace.is_empty());
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(cfg.seed, &[STREAM_TEACHER]));
        let init = NetworkParams::<f64>::init(30, 4, 8, cfg.dropout, &mut rng);
        assert_eq!(p.entity_emb, init.entity_emb);
        assert_eq!(p.transform, init.transform);
    }

    #[test]
    fn student_copies_shared_parts() {
        let pair = generate_synthetic_pair(&toy_synth(), 2).unwrap();
        let cfg = toy_cfg();
        let (t, _) = pretrain_teacher::<f64>(&pair.source, &cfg).unwrap();
        let rel = pair.source.relations();
        let a = init_student_from_teacher(&t, rel, 30, rel, &cfg, 1).unwrap();
        let b = init_student_from_teacher(&t, rel, 30, rel, &cfg, 2).unwrap();
        assert_eq!(a.relation_emb, t.relation_emb);
        assert_eq!(a.transform, t.transform);
        assert_eq!(a.attn, t.attn);
        assert_eq!(a.time_freq, b.time_freq);
        assert_ne!(a.entity_emb, b.entity_emb);
        let bound = 6.0 / 8f64.sqrt();
        assert!(a.entity_emb.data().iter().all(|x| x.abs() <= bound));
        // target relations are a renamed subset
        let sub = Vocab::from_names(["r2", "r0"]);
        let s = init_student_from_teacher(&t, rel, 5, &sub, &cfg, 1).unwrap();
        assert_eq!(s.relation_emb.row(0), t.relation_emb.row(2));
        assert_eq!(s.relation_emb.row(3), t.relation_emb.row(4));
        let missing = Vocab::from_names(["nope"]);
        assert!(matches!(init_student_from_teacher(&t, rel, 5, &missing, &cfg, 1), Err(Error::Config(_))));
    }

    struct Toy {
        student: NetworkParams<f64>,
        align: AlignParams<f64>,
        teacher_traj: BTreeMap<EntityId, Vec<Vec<f64>>>,
        target: TemporalKG,
        graph: Vec<Instance>,
        graph_st: Vec<Instance>,
        align_gt: Vec<AlignSample>,
        align_st: Vec<AlignSample>,
    }

    fn toy_state(seed: u64) -> Toy {
        let synth = toy_synth();
        let pair = generate_synthetic_pair(&synth, seed).unwrap();
        let target = split_by_time(&pair.target_incomplete, &synth.split).unwrap().train;
        let cfg = toy_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let teacher = NetworkParams::<f64>::init(30, 4, 8, 0.0, &mut rng);
        let student = NetworkParams::<f64>::init(30, 4, 8, 0.0, &mut rng);
        let align = AlignParams::init(8, 0.2, &mut rng);
        let enc = encoder_config(&cfg);
        let ids: Vec<EntityId> = (0..30).collect();
        let teacher_traj = trajectories(&teacher, &pair.source, &ids, 6, &enc).unwrap();
        let neg = negative_config(&cfg, 0);
        let q = target.quadruples();
        let graph = sample_instances(&student, &q[..6], &neg, &mut rng).unwrap();
        let graph_st = sample_instances(&student, &q[6..9], &neg, &mut rng).unwrap();
        let pairs = pairs_of(&pair.alignments);
        let none = AlignmentSet::default();
        let align_gt = sample_alignment_negatives(&pairs[..3], 30, 3, &none, &mut rng);
        let align_st = sample_alignment_negatives(&[(pairs[3].0, 11), (5, 17)], 30, 3, &none, &mut rng);
        Toy { student, align, teacher_traj, target, graph, graph_st, align_gt, align_st }
    }

    fn margins() -> Margins<f64> {
        Margins { reasoning: 0.5, alignment: 0.5 }
    }

    #[test]
    fn combined_loss_is_weighted_sum_of_terms() {
        let toy = toy_state(4);
        let enc = encoder_config(&toy_cfg());
        let w = LossWeights::from_sizes(6, 3, 3, 2).unwrap();
        let batch = CombinedBatch {
            graph: &toy.graph,
            graph_st: &toy.graph_st,
            align: &toy.align_gt,
            align_st: &toy.align_st,
        };
        let out = combined_loss(
            &toy.student,
            &toy.align,
            &toy.teacher_traj,
            &toy.target,
            &enc,
            6,
            batch,
            &w,
            margins(),
            StrengthChoice::Adaptive,
            None,
        )
        .unwrap();
        // each term recomputed on its own
        let reason = |inst: &[Instance]| {
            let mut cache = EncodeCache::new(&toy.student, &toy.target, enc, None);
            reasoning_loss_on(&mut cache, inst, 0.5, 1.0).unwrap().value
        };
        let ids: Vec<EntityId> = (0..30).collect();
        let tt: BTreeMap<_, _> = ids.iter().copied().zip(encode_trajectories(&toy.student, &toy.target, &ids, 6, &enc).unwrap()).collect();
        let align = |s: &[AlignSample]| {
            alignment_loss(&toy.align, &toy.teacher_traj, &tt, s, 0.5, Strength::Adaptive).unwrap().value.value
        };
        let terms = [reason(&toy.graph), reason(&toy.graph_st), align(&toy.align_gt), align(&toy.align_st)];
        let hand = w.graph * terms[0] + w.graph_st * terms[1] + w.align * terms[2] + w.align_st * terms[3];
        for (a, b) in out.terms.iter().zip(&terms) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        assert!((out.value - hand).abs() < 1e-12);
        assert!(terms.iter().all(|t| *t > 0.0));
    }

    #[test]
    fn empty_pseudo_sets_reduce_to_plain_objective() {
        let toy = toy_state(6);
        let enc = encoder_config(&toy_cfg());
        let w = LossWeights::from_sizes(6, 0, 3, 0).unwrap();
        let full = CombinedBatch { graph: &toy.graph, graph_st: &[], align: &toy.align_gt, align_st: &[] };
        let out = combined_loss(
            &toy.student, &toy.align, &toy.teacher_traj, &toy.target, &enc, 6, full, &w, margins(), StrengthChoice::Adaptive, None,
        )
        .unwrap();
        assert_eq!((w.graph, w.graph_st, w.align, w.align_st), (1.0, 0.0, 1.0, 0.0));
        assert_eq!(out.value, out.terms[0] + out.terms[2]);
        assert_eq!(out.terms[1], 0.0);
        assert_eq!(out.terms[3], 0.0);
    }

    fn toy_run(cfg: &TrainConfig) -> TrainState<f64> {
        let synth = toy_synth();
        let pair = generate_synthetic_pair(&synth, 3).unwrap();
        let parts = split_by_time(&pair.target_incomplete, &synth.split).unwrap();
        let (teacher, _) = pretrain_teacher::<f64>(&pair.source, cfg).unwrap();
        let inputs = TrainInputs {
            source: &pair.source,
            target: &parts.train,
            validation: parts.val.quadruples(),
            alignments: &pair.alignments,
            train_steps: 6,
        };
        train_mpkd(inputs, teacher, cfg).unwrap()
    }

    #[test]
    fn pure_training_keeps_pseudo_sets_empty() {
        let mut cfg = toy_cfg();
        cfg.set_ablation("pure_training").unwrap();
        let s = toy_run(&cfg);
        assert!(s.pseudo.is_empty() && s.transferred.is_empty());
        assert!(s.trace.iter().all(|l| l.pseudo_count == 0 && l.transferred_count == 0));
    }

    #[test]
    fn full_run_is_deterministic_and_keeps_teacher() {
        let cfg = TrainConfig { patience: 100, ..toy_cfg() };
        let a = toy_run(&cfg);
        let b = toy_run(&cfg);
        assert_eq!(a.student.entity_emb, b.student.entity_emb);
        assert_eq!(a.align.temporal_q, b.align.temporal_q);
        assert_eq!(a.log_tsv(), b.log_tsv());
        assert_eq!(a.audit, b.audit);
        let synth = toy_synth();
        let pair = generate_synthetic_pair(&synth, 3).unwrap();
        let (teacher, _) = pretrain_teacher::<f64>(&pair.source, &cfg).unwrap();
        assert_eq!(a.teacher.entity_emb, teacher.entity_emb);
        assert_eq!(a.teacher.relation_emb, teacher.relation_emb);
        // transferred events only grow
        let counts: Vec<usize> = a.trace.iter().map(|l| l.transferred_count).collect();
        assert!(counts.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(a.trace.len(), cfg.epochs);
        assert!(a.trace[cfg.warmup_epochs..].iter().any(|l| l.pseudo_count > 0));
    }

    #[test]
    fn log_line_format() {
        let l = EpochLog { epoch: 2, phase: "student", loss: 0.5, val_mrr: 0.25, pseudo_count: 3, transferred_count: 7 };
        assert_eq!(l.tsv(), "2\tstudent\t0.500000\t0.250000\t3\t7");
    }

    #[test]
    fn missing_alignments_rejected_unless_pure() {
        let synth = toy_synth();
        let pair = generate_synthetic_pair(&synth, 3).unwrap();
        let cfg = toy_cfg();
        let (teacher, _) = pretrain_teacher::<f64>(&pair.source, &cfg).unwrap();
        let empty = AlignmentSet::default();
        let inputs = TrainInputs {
            source: &pair.source,
            target: &pair.target_incomplete,
            validation: &[],
            alignments: &empty,
            train_steps: 6,
        };
        assert!(matches!(train_mpkd(inputs, teacher, &cfg), Err(Error::Empty(_))));
    }
}
