//! TransE plausibility scores and the margin ranking loss over sampled
//! negatives.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tkg::{EntityId, History, Quadruple, RelationId, TimeStep};

use crate::encoder::{encode_entity, EncodeCache, EncoderConfig, NetworkParams};
use crate::error::{Error, Result};
use crate::numerics::Real;

/// Resampling budget for a negative that collides with the true answer.
pub const MAX_RESAMPLE: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorruptMode {
    ObjectOnly,
    /// Also corrupt subjects, phrased as object corruption of `(o, r⁻¹, s, t)`.
    BothSides,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NegativeSamplerConfig {
    pub factor: usize,
    pub corrupt_mode: CorruptMode,
    pub seed: u64,
}

impl Default for NegativeSamplerConfig {
    fn default() -> Self {
        Self {
            factor: 10,
            corrupt_mode: CorruptMode::BothSides,
            seed: 0,
        }
    }
}

/// One object-prediction training example with its sampled negatives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instance {
    pub subject: EntityId,
    /// Model relation id; reciprocal ids are `r + base_relations`.
    pub relation: RelationId,
    pub object: EntityId,
    pub time: TimeStep,
    pub negatives: Vec<EntityId>,
}

/// Loss value plus the distance of the nearest hinge or ReLU to its kink.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValue<T> {
    pub value: T,
    pub kink_gap: T,
}

/// `-‖h_s + h_r - h_o‖²`.
pub fn transe_score<T: Real>(hs: &[T], hr: &[T], ho: &[T]) -> T {
    -hs.iter()
        .zip(hr)
        .zip(ho)
        .map(|((&a, &b), &c)| {
            let x = a + b - c;
            x * x
        })
        .sum::<T>()
}

fn check_quad<T: Real>(params: &NetworkParams<T>, q: &Quadruple) -> Result<()> {
    for e in [q.subject, q.object] {
        if e >= params.entities() {
            return Err(Error::UnknownId { kind: "entity", id: e });
        }
    }
    if q.relation >= params.base_relations {
        return Err(Error::UnknownId {
            kind: "relation",
            id: q.relation,
        });
    }
    Ok(())
}

/// Deterministic score of a quadruple from representations at its time.
pub fn score_quadruple<T: Real, H: History + ?Sized>(
    params: &NetworkParams<T>,
    history: &H,
    q: &Quadruple,
    cfg: &EncoderConfig,
) -> Result<T> {
    check_quad(params, q)?;
    let hs = encode_entity(params, history, q.subject, q.time, cfg)?;
    let ho = encode_entity(params, history, q.object, q.time, cfg)?;
    Ok(transe_score(&hs, params.relation_emb.row(q.relation), &ho))
}

/// Uniform draw from `0..n` avoiding `exclude`, or `None` after the budget.
pub fn sample_excluding(
    n: usize,
    exclude: impl Fn(EntityId) -> bool,
    rng: &mut impl Rng,
) -> Option<EntityId> {
    if n == 0 {
        return None;
    }
    (0..MAX_RESAMPLE)
        .map(|_| rng.gen_range(0..n))
        .find(|&e| !exclude(e))
}

/// Expands a batch into object-prediction instances with negatives.
pub fn sample_instances<T: Real>(
    params: &NetworkParams<T>,
    batch: &[Quadruple],
    neg: &NegativeSamplerConfig,
    rng: &mut impl Rng,
) -> Result<Vec<Instance>> {
    if neg.factor == 0 {
        return Err(Error::Config("negative factor must be at least 1".into()));
    }
    let n = params.entities();
    let mut out = Vec::with_capacity(batch.len() * 2);
    for q in batch {
        check_quad(params, q)?;
        let mut push = |s: EntityId, r: RelationId, o: EntityId| {
            let negatives = (0..neg.factor)
                .filter_map(|_| sample_excluding(n, |e| e == o, &mut *rng))
                .collect();
            out.push(Instance {
                subject: s,
                relation: r,
                object: o,
                time: q.time,
                negatives,
            });
        };
        push(q.subject, q.relation, q.object);
        if neg.corrupt_mode == CorruptMode::BothSides {
            push(q.object, params.inverse_relation(q.relation), q.subject);
        }
    }
    Ok(out)
}

/// Hinge loss over instances; pushes `weight · dL/dh` into the cache and
/// returns the unweighted value.
///
/// Each instance averages over the negatives it actually drew; instances that
/// drew none are left out of the batch mean.
pub fn reasoning_loss_on<T: Real, H: History + ?Sized>(
    cache: &mut EncodeCache<'_, T, H>,
    instances: &[Instance],
    margin: T,
    weight: T,
) -> Result<LossValue<T>> {
    if instances.is_empty() {
        return Err(Error::Empty("batch"));
    }
    if margin <= T::zero() {
        return Err(Error::Config("margin must be positive".into()));
    }
    let used = instances.iter().filter(|i| !i.negatives.is_empty()).count();
    let mut value = T::zero();
    let mut gap = T::infinity();
    if used == 0 {
        return Ok(LossValue { value, kink_gap: gap });
    }
    let d = cache.params().dim();
    let batch_scale = T::one() / T::lit(used as f64);
    for inst in instances.iter().filter(|i| !i.negatives.is_empty()) {
        let hr = cache.params().relation_emb.row(inst.relation).to_vec();
        let s = cache.encode(inst.subject, inst.time)?;
        let o = cache.encode(inst.object, inst.time)?;
        let hs = cache.output(s).to_vec();
        let residual = |ho: &[T]| -> Vec<T> {
            (0..d).map(|i| hs[i] + hr[i] - ho[i]).collect()
        };
        let x_pos = residual(cache.output(o));
        let f_pos = -x_pos.iter().map(|&v| v * v).sum::<T>();
        let scale = batch_scale / T::lit(inst.negatives.len() as f64);
        let mut d_pos = T::zero();
        let mut d_rs = vec![T::zero(); d];
        for &neg in &inst.negatives {
            let n = cache.encode(neg, inst.time)?;
            let x_neg = residual(cache.output(n));
            let f_neg = -x_neg.iter().map(|&v| v * v).sum::<T>();
            let h = margin - f_pos + f_neg;
            gap = gap.min(h.abs());
            if h > T::zero() {
                value += scale * h;
                d_pos += scale;
                // dL/df_neg = scale, df/dh_s = -2x, df/dh_o = 2x
                let c = weight * scale * T::lit(2.0);
                let g_neg: Vec<T> = x_neg.iter().map(|&v| v * c).collect();
                cache.accumulate(n, &g_neg, T::one());
                for (acc, &v) in d_rs.iter_mut().zip(&x_neg) {
                    *acc -= v * c;
                }
            }
        }
        if d_pos > T::zero() {
            // dL/df_pos = -d_pos
            let c = weight * d_pos * T::lit(2.0);
            let g_obj: Vec<T> = x_pos.iter().map(|&v| -v * c).collect();
            cache.accumulate(o, &g_obj, T::one());
            for (acc, &v) in d_rs.iter_mut().zip(&x_pos) {
                *acc += v * c;
            }
        }
        if d_rs.iter().any(|&v| v != T::zero()) {
            cache.accumulate(s, &d_rs, T::one());
            cache.push_relation_grad(inst.relation, &d_rs);
        }
    }
    Ok(LossValue {
        value,
        kink_gap: gap.min(cache.relu_gap()),
    })
}

/// Batch loss on the dropout-free path with full parameter gradients.
pub fn reasoning_loss<T: Real, H: History + ?Sized>(
    params: &NetworkParams<T>,
    history: &H,
    batch: &[Quadruple],
    neg: &NegativeSamplerConfig,
    margin: T,
    cfg: &EncoderConfig,
) -> Result<(LossValue<T>, NetworkParams<T>)> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(neg.seed);
    let instances = sample_instances(params, batch, neg, &mut rng)?;
    let mut cache = EncodeCache::new(params, history, *cfg, None);
    let value = reasoning_loss_on(&mut cache, &instances, margin, T::one())?;
    let mut grads = params.zeros_like();
    cache.backward(&mut grads);
    Ok((value, grads))
}
