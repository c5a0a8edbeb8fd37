//! Alignment module: causal temporal attention over representation
//! trajectories, cosine correspondence across languages, adaptive strength
//! from cross attention, and the strength-weighted alignment hinge loss.

use std::collections::BTreeMap;

use rand::Rng;
use tkg::{AlignmentSet, EntityId};

use crate::error::{Error, Result};
use crate::numerics::{axpy, cosine, cosine_backward, dot, norm, softmax_backward, softmax_masked, DenseMatrix, ParamSet, Real};
use crate::scoring::{sample_excluding, LossValue};

/// Query/key/value transforms of the temporal layer and query/key transforms
/// of the cross-lingual layer.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignParams<T> {
    pub temporal_q: DenseMatrix<T>,
    pub temporal_k: DenseMatrix<T>,
    pub temporal_v: DenseMatrix<T>,
    pub cross_q: DenseMatrix<T>,
    pub cross_k: DenseMatrix<T>,
}

impl<T: Real> AlignParams<T> {
    /// Identity plus uniform noise of half-width `noise` on every transform.
    pub fn init(dim: usize, noise: f64, rng: &mut impl Rng) -> Self {
        let mut m = || {
            DenseMatrix::from_fn(dim, dim, |i, j| {
                let eye = if i == j { 1.0 } else { 0.0 };
                let jitter = if noise > 0.0 { rng.gen_range(-noise..=noise) } else { 0.0 };
                T::lit(eye + jitter)
            })
        };
        Self {
            temporal_q: m(),
            temporal_k: m(),
            temporal_v: m(),
            cross_q: m(),
            cross_k: m(),
        }
    }

    pub fn dim(&self) -> usize {
        self.temporal_q.rows()
    }

    pub fn zeros_like(&self) -> Self {
        let d = self.dim();
        Self {
            temporal_q: DenseMatrix::zeros(d, d),
            temporal_k: DenseMatrix::zeros(d, d),
            temporal_v: DenseMatrix::zeros(d, d),
            cross_q: DenseMatrix::zeros(d, d),
            cross_k: DenseMatrix::zeros(d, d),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|b| b.iter().all(|x| x.is_finite()))
    }

    pub fn cast<U: Real>(&self) -> AlignParams<U> {
        AlignParams {
            temporal_q: self.temporal_q.cast(),
            temporal_k: self.temporal_k.cast(),
            temporal_v: self.temporal_v.cast(),
            cross_q: self.cross_q.cast(),
            cross_k: self.cross_k.cast(),
        }
    }
}

impl<T: Real> ParamSet<T> for AlignParams<T> {
    fn blocks(&self) -> Vec<&[T]> {
        vec![
            self.temporal_q.data(),
            self.temporal_k.data(),
            self.temporal_v.data(),
            self.cross_q.data(),
            self.cross_k.data(),
        ]
    }

    fn blocks_mut(&mut self) -> Vec<&mut [T]> {
        vec![
            self.temporal_q.data_mut(),
            self.temporal_k.data_mut(),
            self.temporal_v.data_mut(),
            self.cross_q.data_mut(),
            self.cross_k.data_mut(),
        ]
    }
}

/// Integrated states `H(1), …, H(T)`; positions are 1-based.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalIntegration<T> {
    rows: Vec<Vec<T>>,
}

impl<T: Real> TemporalIntegration<T> {
    pub fn from_rows(rows: Vec<Vec<T>>) -> Self {
        Self { rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[Vec<T>] {
        &self.rows
    }

    /// `H(t)` for `1 ≤ t ≤ len`.
    pub fn at(&self, t: usize) -> Result<&[T]> {
        if t == 0 || t > self.rows.len() {
            return Err(Error::Invalid(format!("time {t} outside 1..={}", self.rows.len())));
        }
        Ok(&self.rows[t - 1])
    }
}

/// Row `t` (0-based) of the causally masked attention: weights over `0..=t`.
pub fn causal_attention<T: Real>(queries: &[Vec<T>], keys: &[Vec<T>]) -> Result<Vec<Vec<T>>> {
    let n = queries.len();
    if n == 0 || keys.len() != n {
        return Err(Error::Shape("causal attention needs equal nonempty sequences".into()));
    }
    let scale = T::one() / T::lit(queries[0].len() as f64).sqrt();
    (0..n)
        .map(|t| {
            let logits: Vec<T> = keys.iter().map(|k| dot(&queries[t], k) * scale).collect();
            let live: Vec<bool> = (0..n).map(|i| i <= t).collect();
            let mut w = softmax_masked(&logits, &live)?;
            w.truncate(t + 1);
            Ok(w)
        })
        .collect()
}

/// Forward record of one temporal integration.
#[derive(Debug, Clone)]
pub struct IntegrationTape<T> {
    input: Vec<Vec<T>>,
    q: Vec<Vec<T>>,
    k: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    weights: Vec<Vec<T>>,
    output: TemporalIntegration<T>,
}

impl<T: Real> IntegrationTape<T> {
    pub fn output(&self) -> &TemporalIntegration<T> {
        &self.output
    }
}

fn project<T: Real>(m: &DenseMatrix<T>, xs: &[Vec<T>]) -> Vec<Vec<T>> {
    xs.iter().map(|x| m.left_mul(x)).collect()
}

pub fn integrate_with_tape<T: Real>(params: &AlignParams<T>, traj: &[Vec<T>]) -> Result<IntegrationTape<T>> {
    if traj.is_empty() {
        return Err(Error::Empty("trajectory"));
    }
    let d = params.dim();
    if traj.iter().any(|x| x.len() != d) {
        return Err(Error::Shape(format!("trajectory rows must have length {d}")));
    }
    let q = project(&params.temporal_q, traj);
    let k = project(&params.temporal_k, traj);
    let v = project(&params.temporal_v, traj);
    let weights = causal_attention(&q, &k)?;
    let rows = weights
        .iter()
        .map(|w| {
            let mut h = vec![T::zero(); d];
            for (&b, vi) in w.iter().zip(&v) {
                axpy(b, vi, &mut h);
            }
            h
        })
        .collect();
    Ok(IntegrationTape {
        input: traj.to_vec(),
        q,
        k,
        v,
        weights,
        output: TemporalIntegration { rows },
    })
}

/// `H(t) = Σ_{i≤t} β_ti · h(i) W^V` with `β_t = softmax_i(Q_t · K_i / √d)`.
pub fn temporal_integrate<T: Real>(params: &AlignParams<T>, traj: &[Vec<T>]) -> Result<TemporalIntegration<T>> {
    Ok(integrate_with_tape(params, traj)?.output)
}

/// Backward through one integration; returns `dL/dtraj`.
pub fn integrate_backward<T: Real>(
    params: &AlignParams<T>,
    tape: &IntegrationTape<T>,
    d_out: &[Vec<T>],
    grads: &mut AlignParams<T>,
) -> Vec<Vec<T>> {
    let n = tape.input.len();
    let d = params.dim();
    let scale = T::one() / T::lit(d as f64).sqrt();
    let mut dq = vec![vec![T::zero(); d]; n];
    let mut dk = vec![vec![T::zero(); d]; n];
    let mut dv = vec![vec![T::zero(); d]; n];
    for t in 0..n {
        let w = &tape.weights[t];
        let dh = &d_out[t];
        if dh.iter().all(|&x| x == T::zero()) {
            continue;
        }
        let dw: Vec<T> = (0..=t).map(|i| dot(dh, &tape.v[i])).collect();
        for i in 0..=t {
            axpy(w[i], dh, &mut dv[i]);
        }
        let dlogit = softmax_backward(w, &dw);
        for i in 0..=t {
            let g = dlogit[i] * scale;
            axpy(g, &tape.k[i], &mut dq[t]);
            axpy(g, &tape.q[t], &mut dk[i]);
        }
    }
    let mut dx = vec![vec![T::zero(); d]; n];
    for i in 0..n {
        let x = &tape.input[i];
        grads.temporal_q.add_outer(x, &dq[i], T::one());
        grads.temporal_k.add_outer(x, &dk[i], T::one());
        grads.temporal_v.add_outer(x, &dv[i], T::one());
        for (m, g) in [(&params.temporal_q, &dq[i]), (&params.temporal_k, &dk[i]), (&params.temporal_v, &dv[i])] {
            let back = m.left_mul_t(g);
            axpy(T::one(), &back, &mut dx[i]);
        }
    }
    dx
}

/// Cosine of `H^s(t)` and `H^t(t)`.
pub fn correspondence<T: Real>(hs: &TemporalIntegration<T>, ht: &TemporalIntegration<T>, t: usize) -> Result<T> {
    cosine(hs.at(t)?, ht.at(t)?)
}

/// Diagonal cross-attention weights `β(1), …, β(T)` with query `H^s` and key `H^t`.
pub fn strength_profile<T: Real>(
    params: &AlignParams<T>,
    hs: &TemporalIntegration<T>,
    ht: &TemporalIntegration<T>,
) -> Result<Vec<T>> {
    if hs.len() != ht.len() {
        return Err(Error::Shape("integrations of different lengths".into()));
    }
    let q = project(&params.cross_q, hs.rows());
    let k = project(&params.cross_k, ht.rows());
    Ok(causal_attention(&q, &k)?
        .into_iter()
        .enumerate()
        .map(|(t, w)| w[t])
        .collect())
}

/// `β_{e,t}` for `1 ≤ t ≤ T`.
pub fn alignment_strength<T: Real>(
    params: &AlignParams<T>,
    hs: &TemporalIntegration<T>,
    ht: &TemporalIntegration<T>,
    t: usize,
) -> Result<T> {
    if t == 0 || t > hs.len() {
        return Err(Error::Invalid(format!("time {t} outside 1..={}", hs.len())));
    }
    Ok(strength_profile(params, hs, ht)?[t - 1])
}

/// A (source, target) pair with its sampled negative targets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignSample {
    pub source: EntityId,
    pub target: EntityId,
    pub negatives: Vec<EntityId>,
}

/// Negatives drawn uniformly over `0..target_count`, never the true target or
/// a target that `exclude` pairs with the same source.
pub fn sample_alignment_negatives(
    pairs: &[(EntityId, EntityId)],
    target_count: usize,
    factor: usize,
    exclude: &AlignmentSet,
    rng: &mut impl Rng,
) -> Vec<AlignSample> {
    pairs
        .iter()
        .map(|&(s, t)| {
            let banned: Vec<EntityId> = exclude
                .iter()
                .filter(|p| p.source == s)
                .map(|p| p.target)
                .collect();
            let negatives = (0..factor)
                .filter_map(|_| sample_excluding(target_count, |e| e == t || banned.contains(&e), &mut *rng))
                .collect();
            AlignSample { source: s, target: t, negatives }
        })
        .collect()
}

/// How the hinge at each (pair, time) is weighted.
#[derive(Debug, Clone, Copy)]
pub enum Strength<'a, T> {
    /// Cross-attention diagonal, treated as a constant in the gradient.
    Adaptive,
    /// Every weight 1.
    Uniform,
    /// Caller-supplied weights, one row of length T per sample.
    Fixed(&'a [Vec<T>]),
}

/// Loss value with gradients for the alignment transforms and for every target
/// trajectory that took part.
#[derive(Debug, Clone)]
pub struct AlignLoss<T> {
    pub value: LossValue<T>,
    pub grad_params: AlignParams<T>,
    pub grad_targets: BTreeMap<EntityId, Vec<Vec<T>>>,
}

/// Cosine that reads a zero vector as orthogonal to everything.
fn safe_cosine<T: Real>(u: &[T], v: &[T]) -> T {
    if norm(u) == T::zero() || norm(v) == T::zero() {
        T::zero()
    } else {
        cosine(u, v).expect("nonzero vectors")
    }
}

fn add_cosine_grad<T: Real>(u: &[T], v: &[T], upstream: T, du: &mut [T], dv: &mut [T]) {
    if let Ok((gu, gv)) = cosine_backward(u, v, upstream) {
        axpy(T::one(), &gu, du);
        axpy(T::one(), &gv, dv);
    }
}

/// Strength weights for every sample under the current parameters.
pub fn strength_table<T: Real>(
    params: &AlignParams<T>,
    sources: &BTreeMap<EntityId, Vec<Vec<T>>>,
    targets: &BTreeMap<EntityId, Vec<Vec<T>>>,
    samples: &[AlignSample],
) -> Result<Vec<Vec<T>>> {
    let mut memo: BTreeMap<(bool, EntityId), TemporalIntegration<T>> = BTreeMap::new();
    let mut integ = |side: bool, e: EntityId| -> Result<TemporalIntegration<T>> {
        if let Some(h) = memo.get(&(side, e)) {
            return Ok(h.clone());
        }
        let map = if side { sources } else { targets };
        let traj = map.get(&e).ok_or(Error::UnknownId { kind: "trajectory", id: e })?;
        let h = temporal_integrate(params, traj)?;
        memo.insert((side, e), h.clone());
        Ok(h)
    };
    samples
        .iter()
        .map(|s| {
            let hs = integ(true, s.source)?;
            let ht = integ(false, s.target)?;
            strength_profile(params, &hs, &ht)
        })
        .collect()
}

/// Mean over samples, time steps and negatives of
/// `β · max(0, λ₂ − g(e_s, e_t, t) + g(e_s, e_t⁻, t))`.
///
/// `sources` and `targets` map entity ids to trajectories of equal length.
/// Samples without negatives are left out of the mean.
pub fn alignment_loss<T: Real>(
    params: &AlignParams<T>,
    sources: &BTreeMap<EntityId, Vec<Vec<T>>>,
    targets: &BTreeMap<EntityId, Vec<Vec<T>>>,
    samples: &[AlignSample],
    margin: T,
    strength: Strength<'_, T>,
) -> Result<AlignLoss<T>> {
    if samples.is_empty() {
        return Err(Error::Empty("alignment pairs"));
    }
    if margin <= T::zero() {
        return Err(Error::Config("margin must be positive".into()));
    }
    let mut src_tapes = BTreeMap::new();
    let mut tgt_tapes = BTreeMap::new();
    for s in samples {
        for (map, tapes, e) in std::iter::once((sources, &mut src_tapes, s.source)) {
            if !tapes.contains_key(&e) {
                let traj = map.get(&e).ok_or(Error::UnknownId { kind: "trajectory", id: e })?;
                tapes.insert(e, integrate_with_tape(params, traj)?);
            }
        }
        for &e in std::iter::once(&s.target).chain(&s.negatives) {
            if !tgt_tapes.contains_key(&e) {
                let traj = targets.get(&e).ok_or(Error::UnknownId { kind: "trajectory", id: e })?;
                tgt_tapes.insert(e, integrate_with_tape(params, traj)?);
            }
        }
    }
    let steps = src_tapes.values().next().map(|t: &IntegrationTape<T>| t.output.len()).unwrap_or(0);
    if src_tapes.values().chain(tgt_tapes.values()).any(|t| t.output.len() != steps) {
        return Err(Error::Shape("trajectories of different lengths".into()));
    }
    if let Strength::Fixed(table) = strength {
        if table.len() != samples.len() || table.iter().any(|r| r.len() != steps) {
            return Err(Error::Shape("strength table does not match samples".into()));
        }
    }
    let d = params.dim();
    let zero_grads = |tapes: &BTreeMap<EntityId, IntegrationTape<T>>| {
        tapes
            .keys()
            .map(|&e| (e, vec![vec![T::zero(); d]; steps]))
            .collect::<BTreeMap<_, _>>()
    };
    let mut d_src = zero_grads(&src_tapes);
    let mut d_tgt = zero_grads(&tgt_tapes);
    let used = samples.iter().filter(|s| !s.negatives.is_empty()).count();
    let mut value = T::zero();
    let mut gap = T::infinity();
    for (idx, s) in samples.iter().enumerate() {
        if s.negatives.is_empty() {
            continue;
        }
        let hs = &src_tapes[&s.source].output;
        let hp = &tgt_tapes[&s.target].output;
        let beta: Vec<T> = match strength {
            Strength::Adaptive => strength_profile(params, hs, hp)?,
            Strength::Uniform => vec![T::one(); steps],
            Strength::Fixed(table) => table[idx].clone(),
        };
        let scale = T::one() / T::lit((used * steps * s.negatives.len()) as f64);
        for t in 0..steps {
            let u = &hs.rows[t];
            let g_pos = safe_cosine(u, &hp.rows[t]);
            let mut d_pos = T::zero();
            for &n in &s.negatives {
                let hn = &tgt_tapes[&n].output.rows[t];
                let h = margin - g_pos + safe_cosine(u, hn);
                gap = gap.min(h.abs());
                if h > T::zero() {
                    let w = beta[t] * scale;
                    value += w * h;
                    d_pos -= w;
                    let mut dn = std::mem::take(&mut d_tgt.get_mut(&n).unwrap()[t]);
                    add_cosine_grad(u, hn, w, &mut d_src.get_mut(&s.source).unwrap()[t], &mut dn);
                    d_tgt.get_mut(&n).unwrap()[t] = dn;
                }
            }
            if d_pos != T::zero() {
                let mut dp = std::mem::take(&mut d_tgt.get_mut(&s.target).unwrap()[t]);
                add_cosine_grad(u, &hp.rows[t], d_pos, &mut d_src.get_mut(&s.source).unwrap()[t], &mut dp);
                d_tgt.get_mut(&s.target).unwrap()[t] = dp;
            }
        }
    }
    let mut grad_params = params.zeros_like();
    for (e, tape) in &src_tapes {
        integrate_backward(params, tape, &d_src[e], &mut grad_params);
    }
    let mut grad_targets = BTreeMap::new();
    for (e, tape) in &tgt_tapes {
        grad_targets.insert(*e, integrate_backward(params, tape, &d_tgt[e], &mut grad_params));
    }
    Ok(AlignLoss {
        value: LossValue { value, kink_gap: gap },
        grad_params,
        grad_targets,
    })
}
