//! Temporal representation network: time encoding and attentive aggregation
//! over the most recent temporal neighbors.
//!
//! `h^l_e(t) = ReLU(Σ_k α_k · h^{l-1}_{n_k}(t_k) W)` with attention logits
//! `a · [h^{l-1}_e(t) ‖ h^{l-1}_{n_k}(t_k) ‖ h_{r_k} ‖ κ(t - t_k)]`. Layer 0 is
//! the entity embedding row. An entity without history before `t` falls back
//! to `ReLU(h⁰_e W)`.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use tkg::{EntityId, History, RelationId, TimeStep};

use crate::error::{Error, Result};
use crate::numerics::{axpy, dot, softmax, softmax_backward, DenseMatrix, ParamSet, Real};

/// Trainable arrays of one encoder plus its frozen time frequencies.
///
/// The relation table holds `2 × base_relations` rows: row `r + base_relations`
/// is the reciprocal of relation `r`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams<T> {
    pub entity_emb: DenseMatrix<T>,
    pub relation_emb: DenseMatrix<T>,
    pub transform: DenseMatrix<T>,
    pub attn: Vec<T>,
    pub time_freq: Vec<T>,
    pub dropout: f64,
    pub base_relations: usize,
}

/// Geometric frequency ladder `ω_i = 10^(-4i/d)`.
pub fn default_time_freq<T: Real>(dim: usize) -> Vec<T> {
    (0..dim)
        .map(|i| T::lit(10f64.powf(-4.0 * i as f64 / dim as f64)))
        .collect()
}

impl<T: Real> NetworkParams<T> {
    /// Embeddings uniform in `±6/√d`; `W` and `a` Glorot-uniform.
    pub fn init(
        entities: usize,
        base_relations: usize,
        dim: usize,
        dropout: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let emb = 6.0 / (dim as f64).sqrt();
        let mut uni = |bound: f64| T::lit(rng.gen_range(-bound..=bound));
        let entity_emb = DenseMatrix::from_fn(entities, dim, |_, _| uni(emb));
        let relation_emb = DenseMatrix::from_fn(2 * base_relations, dim, |_, _| uni(emb));
        let w = (6.0 / (2 * dim) as f64).sqrt();
        let transform = DenseMatrix::from_fn(dim, dim, |_, _| uni(w));
        let a = (6.0 / (4 * dim + 1) as f64).sqrt();
        let attn = (0..4 * dim).map(|_| uni(a)).collect();
        Self {
            entity_emb,
            relation_emb,
            transform,
            attn,
            time_freq: default_time_freq(dim),
            dropout,
            base_relations,
        }
    }

    pub fn dim(&self) -> usize {
        self.transform.rows()
    }

    pub fn entities(&self) -> usize {
        self.entity_emb.rows()
    }

    /// Reciprocal relation id used for subject-side queries.
    pub fn inverse_relation(&self, r: RelationId) -> RelationId {
        if r < self.base_relations {
            r + self.base_relations
        } else {
            r - self.base_relations
        }
    }

    /// Zero-valued arrays with the same shapes; used as gradient accumulators.
    pub fn zeros_like(&self) -> Self {
        Self {
            entity_emb: DenseMatrix::zeros(self.entity_emb.rows(), self.dim()),
            relation_emb: DenseMatrix::zeros(self.relation_emb.rows(), self.dim()),
            transform: DenseMatrix::zeros(self.dim(), self.dim()),
            attn: vec![T::zero(); self.attn.len()],
            time_freq: self.time_freq.clone(),
            dropout: self.dropout,
            base_relations: self.base_relations,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if self.transform.cols() != d
            || self.entity_emb.cols() != d
            || self.relation_emb.cols() != d
            || self.attn.len() != 4 * d
            || self.time_freq.len() != d
            || self.relation_emb.rows() != 2 * self.base_relations
        {
            return Err(Error::Shape("inconsistent network dimensions".into()));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|b| b.iter().all(|x| x.is_finite()))
    }

    pub fn cast<U: Real>(&self) -> NetworkParams<U> {
        NetworkParams {
            entity_emb: self.entity_emb.cast(),
            relation_emb: self.relation_emb.cast(),
            transform: self.transform.cast(),
            attn: self.attn.iter().map(|x| U::lit(x.as_f64())).collect(),
            time_freq: self.time_freq.iter().map(|x| U::lit(x.as_f64())).collect(),
            dropout: self.dropout,
            base_relations: self.base_relations,
        }
    }
}

impl<T: Real> ParamSet<T> for NetworkParams<T> {
    fn blocks(&self) -> Vec<&[T]> {
        vec![
            self.entity_emb.data(),
            self.relation_emb.data(),
            self.transform.data(),
            &self.attn,
        ]
    }

    fn blocks_mut(&mut self) -> Vec<&mut [T]> {
        vec![
            self.entity_emb.data_mut(),
            self.relation_emb.data_mut(),
            self.transform.data_mut(),
            &mut self.attn,
        ]
    }
}

/// Encoder hyperparameters that are not arrays.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncoderConfig {
    /// Temporal neighbors per entity (b).
    pub neighbors: usize,
    /// Aggregation layers (L).
    pub layers: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            neighbors: 8,
            layers: 1,
        }
    }
}

/// Cosine features `κ(Δt)_i = sqrt(1/d) · cos(ω_i Δt)`.
pub fn time_encode<T: Real>(params: &NetworkParams<T>, delta_t: TimeStep) -> Vec<T> {
    let d = params.time_freq.len();
    let scale = T::one() / T::lit(d as f64).sqrt();
    let dt = T::lit(delta_t as f64);
    params
        .time_freq
        .iter()
        .map(|&w| scale * (w * dt).cos())
        .collect()
}

#[derive(Debug, Clone)]
enum Node<T> {
    Embedding,
    Fallback {
        pre: Vec<T>,
        mask: Option<Vec<T>>,
    },
    Aggregate {
        query: Box<Tape<T>>,
        neighbors: Vec<(Tape<T>, RelationId, Vec<T>)>,
        alpha: Vec<T>,
        mixed: Vec<T>,
        pre: Vec<T>,
        mask: Option<Vec<T>>,
    },
}

/// Forward record of one `h^l_e(t)` evaluation, replayed by the backward pass.
#[derive(Debug, Clone)]
pub struct Tape<T> {
    entity: EntityId,
    output: Vec<T>,
    node: Node<T>,
}

impl<T: Real> Tape<T> {
    pub fn output(&self) -> &[T] {
        &self.output
    }

    /// Attention weights of the outermost aggregation, if any.
    pub fn attention(&self) -> Option<&[T]> {
        match &self.node {
            Node::Aggregate { alpha, .. } => Some(alpha),
            _ => None,
        }
    }

    /// Smallest |pre-activation| over all ReLUs in the record.
    pub fn relu_gap(&self) -> T {
        let gap = |v: &[T]| v.iter().fold(T::infinity(), |m, x| m.min(x.abs()));
        match &self.node {
            Node::Embedding => T::infinity(),
            Node::Fallback { pre, .. } => gap(pre),
            Node::Aggregate {
                query,
                neighbors,
                pre,
                ..
            } => neighbors
                .iter()
                .fold(gap(pre).min(query.relu_gap()), |m, (n, _, _)| m.min(n.relu_gap())),
        }
    }
}

/// Dropout mask with inverted scaling, or `None` when inactive.
fn dropout_mask<T: Real>(dim: usize, rate: f64, rng: Option<&mut ChaCha8Rng>) -> Option<Vec<T>> {
    let rng = rng?;
    if rate <= 0.0 {
        return None;
    }
    let keep = T::lit(1.0 / (1.0 - rate));
    Some(
        (0..dim)
            .map(|_| if rng.gen::<f64>() < rate { T::zero() } else { keep })
            .collect(),
    )
}

fn relu_masked<T: Real>(z: &mut [T], mask: &Option<Vec<T>>) -> Vec<T> {
    if let Some(m) = mask {
        z.iter_mut().zip(m).for_each(|(x, &s)| *x *= s);
    }
    z.iter().map(|&x| x.max(T::zero())).collect()
}

fn check_entity<T: Real>(params: &NetworkParams<T>, e: EntityId) -> Result<()> {
    if e >= params.entities() {
        return Err(Error::UnknownId { kind: "entity", id: e });
    }
    Ok(())
}

fn forward<T: Real, H: History + ?Sized>(
    params: &NetworkParams<T>,
    history: &H,
    e: EntityId,
    t: TimeStep,
    layer: usize,
    cfg: &EncoderConfig,
    mut rng: Option<&mut ChaCha8Rng>,
) -> Tape<T> {
    let d = params.dim();
    if layer == 0 {
        return Tape {
            entity: e,
            output: params.entity_emb.row(e).to_vec(),
            node: Node::Embedding,
        };
    }
    let hist = history.temporal_neighbors(e, t, cfg.neighbors);
    if hist.is_empty() {
        let mut pre = params.transform.left_mul(params.entity_emb.row(e));
        let mask = dropout_mask(d, params.dropout, rng);
        let output = relu_masked(&mut pre, &mask);
        return Tape {
            entity: e,
            output,
            node: Node::Fallback { pre, mask },
        };
    }
    let query = forward(params, history, e, t, layer - 1, cfg, rng.as_deref_mut());
    let a = &params.attn;
    let q_self = dot(&a[..d], query.output());
    let mut neighbors = Vec::with_capacity(hist.len());
    let mut logits = Vec::with_capacity(hist.len());
    for n in hist {
        let sub = forward(params, history, n.entity, n.time, layer - 1, cfg, rng.as_deref_mut());
        let kappa = time_encode(params, t - n.time);
        let logit = q_self
            + dot(&a[d..2 * d], sub.output())
            + dot(&a[2 * d..3 * d], params.relation_emb.row(n.relation))
            + dot(&a[3 * d..], &kappa);
        logits.push(logit);
        neighbors.push((sub, n.relation, kappa));
    }
    let alpha = softmax(&logits).expect("non-empty neighbor set");
    let mut mixed = vec![T::zero(); d];
    for ((sub, _, _), &w) in neighbors.iter().zip(&alpha) {
        axpy(w, sub.output(), &mut mixed);
    }
    let mut pre = params.transform.left_mul(&mixed);
    let mask = dropout_mask(d, params.dropout, rng);
    let output = relu_masked(&mut pre, &mask);
    Tape {
        entity: e,
        output,
        node: Node::Aggregate {
            query: Box::new(query),
            neighbors,
            alpha,
            mixed,
            pre,
            mask,
        },
    }
}

/// Accumulates `dL/dθ` into `grads` given `dL/dh` for the taped output.
pub fn backward<T: Real>(tape: &Tape<T>, dh: &[T], params: &NetworkParams<T>, grads: &mut NetworkParams<T>) {
    let d = params.dim();
    match &tape.node {
        Node::Embedding => axpy(T::one(), dh, grads.entity_emb.row_mut(tape.entity)),
        Node::Fallback { pre, mask } => {
            let dz = relu_grad(pre, mask, dh);
            let input = params.entity_emb.row(tape.entity);
            grads.transform.add_outer(input, &dz, T::one());
            let dinput = params.transform.left_mul_t(&dz);
            axpy(T::one(), &dinput, grads.entity_emb.row_mut(tape.entity));
        }
        Node::Aggregate {
            query,
            neighbors,
            alpha,
            mixed,
            pre,
            mask,
        } => {
            let dz = relu_grad(pre, mask, dh);
            grads.transform.add_outer(mixed, &dz, T::one());
            let dmixed = params.transform.left_mul_t(&dz);
            let dalpha: Vec<T> = neighbors
                .iter()
                .map(|(sub, _, _)| dot(sub.output(), &dmixed))
                .collect();
            let dlogit = softmax_backward(alpha, &dalpha);
            let a = &params.attn;
            let total: T = dlogit.iter().copied().sum();
            // query term a[..d] · h_e
            axpy(total, query.output(), &mut grads.attn[..d]);
            let dquery: Vec<T> = a[..d].iter().map(|&x| x * total).collect();
            backward(query, &dquery, params, grads);
            for (((sub, r, kappa), &w), &g) in neighbors.iter().zip(alpha).zip(&dlogit) {
                axpy(g, sub.output(), &mut grads.attn[d..2 * d]);
                axpy(g, params.relation_emb.row(*r), &mut grads.attn[2 * d..3 * d]);
                axpy(g, kappa, &mut grads.attn[3 * d..]);
                axpy(g, &a[2 * d..3 * d], grads.relation_emb.row_mut(*r));
                let mut dsub: Vec<T> = dmixed.iter().map(|&x| x * w).collect();
                axpy(g, &a[d..2 * d], &mut dsub);
                backward(sub, &dsub, params, grads);
            }
        }
    }
}

fn relu_grad<T: Real>(pre: &[T], mask: &Option<Vec<T>>, dh: &[T]) -> Vec<T> {
    let mut dz: Vec<T> = pre
        .iter()
        .zip(dh)
        .map(|(&z, &g)| if z > T::zero() { g } else { T::zero() })
        .collect();
    if let Some(m) = mask {
        dz.iter_mut().zip(m).for_each(|(x, &s)| *x *= s);
    }
    dz
}

/// Deterministic (dropout-free) representation `h^L_e(t)`.
pub fn encode_entity<T: Real, H: History + ?Sized>(
    params: &NetworkParams<T>,
    history: &H,
    e: EntityId,
    t: TimeStep,
    cfg: &EncoderConfig,
) -> Result<Vec<T>> {
    check_entity(params, e)?;
    Ok(forward(params, history, e, t, cfg.layers, cfg, None).output)
}

/// Taped evaluation for gradient computation; dropout active when `rng` is given.
pub fn encode_with_tape<T: Real, H: History + ?Sized>(
    params: &NetworkParams<T>,
    history: &H,
    e: EntityId,
    t: TimeStep,
    cfg: &EncoderConfig,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<Tape<T>> {
    check_entity(params, e)?;
    Ok(forward(params, history, e, t, cfg.layers, cfg, rng))
}

/// `h_e(1), …, h_e(t_max)`; element `t` sees history strictly before `t`.
pub fn encode_trajectory<T: Real, H: History + ?Sized>(
    params: &NetworkParams<T>,
    history: &H,
    e: EntityId,
    t_max: TimeStep,
    cfg: &EncoderConfig,
) -> Result<Vec<Vec<T>>> {
    (1..=t_max)
        .map(|t| encode_entity(params, history, e, t, cfg))
        .collect()
}

/// Representations of every entity at time `t`, one row per entity.
pub fn encode_all<T: Real, H: History + ?Sized>(
    params: &NetworkParams<T>,
    history: &H,
    t: TimeStep,
    cfg: &EncoderConfig,
) -> DenseMatrix<T> {
    let n = params.entities();
    let rows: Vec<Vec<T>> = (0..n)
        .into_par_iter()
        .map(|e| forward(params, history, e, t, cfg.layers, cfg, None).output)
        .collect();
    DenseMatrix::new(n, params.dim(), rows.concat()).expect("finite encodings")
}

/// Trajectories of several entities, computed in parallel, in input order.
pub fn encode_trajectories<T: Real, H: History + ?Sized>(
    params: &NetworkParams<T>,
    history: &H,
    entities: &[EntityId],
    t_max: TimeStep,
    cfg: &EncoderConfig,
) -> Result<Vec<Vec<Vec<T>>>> {
    entities
        .par_iter()
        .map(|&e| encode_trajectory(params, history, e, t_max, cfg))
        .collect()
}

/// Per-batch memo of taped encodings keyed by `(entity, time)`.
///
/// Losses read outputs through [`EncodeCache::encode`] and push upstream
/// gradients with [`EncodeCache::accumulate`]; one [`EncodeCache::backward`]
/// call then replays every tape once, in insertion order.
pub struct EncodeCache<'a, T, H: History + ?Sized> {
    params: &'a NetworkParams<T>,
    history: &'a H,
    cfg: EncoderConfig,
    rng: Option<ChaCha8Rng>,
    index: HashMap<(EntityId, TimeStep), usize>,
    tapes: Vec<Tape<T>>,
    upstream: Vec<Option<Vec<T>>>,
    relation_upstream: BTreeMap<RelationId, Vec<T>>,
}

impl<'a, T: Real, H: History + ?Sized> EncodeCache<'a, T, H> {
    /// `dropout_seed = None` gives the deterministic evaluation path.
    pub fn new(
        params: &'a NetworkParams<T>,
        history: &'a H,
        cfg: EncoderConfig,
        dropout_seed: Option<u64>,
    ) -> Self {
        Self {
            params,
            history,
            cfg,
            rng: dropout_seed.map(ChaCha8Rng::seed_from_u64),
            index: HashMap::new(),
            tapes: Vec::new(),
            upstream: Vec::new(),
            relation_upstream: BTreeMap::new(),
        }
    }

    pub fn params(&self) -> &NetworkParams<T> {
        self.params
    }

    pub fn encode(&mut self, e: EntityId, t: TimeStep) -> Result<usize> {
        if let Some(&i) = self.index.get(&(e, t)) {
            return Ok(i);
        }
        let tape = encode_with_tape(self.params, self.history, e, t, &self.cfg, self.rng.as_mut())?;
        let i = self.tapes.len();
        self.tapes.push(tape);
        self.upstream.push(None);
        self.index.insert((e, t), i);
        Ok(i)
    }

    pub fn output(&self, slot: usize) -> &[T] {
        self.tapes[slot].output()
    }

    pub fn accumulate(&mut self, slot: usize, grad: &[T], scale: T) {
        let d = self.params.dim();
        let buf = self.upstream[slot].get_or_insert_with(|| vec![T::zero(); d]);
        axpy(scale, grad, buf);
    }

    /// Gradient that reaches a relation row directly rather than via a tape.
    pub fn push_relation_grad(&mut self, r: RelationId, grad: &[T]) {
        let d = self.params.dim();
        let buf = self.relation_upstream.entry(r).or_insert_with(|| vec![T::zero(); d]);
        axpy(T::one(), grad, buf);
    }

    pub fn relu_gap(&self) -> T {
        self.tapes
            .iter()
            .fold(T::infinity(), |m, tape| m.min(tape.relu_gap()))
    }

    pub fn len(&self) -> usize {
        self.tapes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tapes.is_empty()
    }

    pub fn backward(&self, grads: &mut NetworkParams<T>) {
        for (tape, up) in self.tapes.iter().zip(&self.upstream) {
            if let Some(dh) = up {
                backward(tape, dh, self.params, grads);
            }
        }
        for (&r, g) in &self.relation_upstream {
            axpy(T::one(), g, grads.relation_emb.row_mut(r));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::grad_check;
    use tkg::{Quadruple, TemporalKG, Vocab};

    fn params(n: usize, r: usize, d: usize, seed: u64) -> NetworkParams<f64> {
        NetworkParams::init(n, r, d, 0.0, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    fn kg(n: usize, quads: Vec<Quadruple>, horizon: u32) -> TemporalKG {
        TemporalKG::new(Vocab::numbered("e", n), Vocab::numbered("r", 2), quads, horizon).unwrap()
    }

    #[test]
    fn time_encoding_examples() {
        let p = params(2, 1, 4, 0);
        let k0 = time_encode(&p, 0);
        assert!(k0.iter().all(|&x| (x - 0.5).abs() < 1e-15));
        assert!((dot(&k0, &k0) - 1.0).abs() < 1e-15);
        let mut p1 = params(1, 1, 1, 0);
        p1.time_freq = vec![std::f64::consts::PI];
        assert!((time_encode(&p1, 1)[0] + 1.0).abs() < 1e-15);
        assert_eq!(time_encode(&p, 7), time_encode(&p, 7));
    }

    #[test]
    fn layer_zero_is_embedding_row() {
        let p = params(3, 1, 4, 1);
        let g = kg(3, vec![Quadruple::new(0, 0, 1, 0)], 3);
        let cfg = EncoderConfig { neighbors: 8, layers: 0 };
        assert_eq!(encode_entity(&p, &g, 1, 2, &cfg).unwrap(), p.entity_emb.row(1));
    }

    #[test]
    fn single_neighbor_gets_full_weight() {
        let p = params(3, 1, 4, 2);
        let g = kg(3, vec![Quadruple::new(0, 0, 2, 1)], 5);
        let got = encode_entity(&p, &g, 0, 3, &EncoderConfig::default()).unwrap();
        let want: Vec<f64> = p
            .transform
            .left_mul(p.entity_emb.row(2))
            .into_iter()
            .map(|x| x.max(0.0))
            .collect();
        assert_eq!(got, want);
    }

    #[test]
    fn two_neighbors_zero_attention_is_mean() {
        // hand computation: identity W, a = 0 -> α = (1/2, 1/2)
        let mut p = params(3, 1, 2, 3);
        p.transform = DenseMatrix::identity(2);
        p.attn = vec![0.0; 8];
        p.entity_emb = DenseMatrix::new(3, 2, vec![9.0, 9.0, 1.0, -3.0, 2.0, 4.0]).unwrap();
        let g = kg(3, vec![Quadruple::new(0, 0, 1, 0), Quadruple::new(2, 1, 0, 1)], 3);
        let got = encode_entity(&p, &g, 0, 2, &EncoderConfig::default()).unwrap();
        assert_eq!(got, vec![1.5, 0.5]);
    }

    #[test]
    fn no_history_falls_back() {
        let p = params(2, 1, 3, 4);
        let g = kg(2, vec![], 4);
        let traj = encode_trajectory(&p, &g, 1, 4, &EncoderConfig::default()).unwrap();
        let fallback: Vec<f64> = p
            .transform
            .left_mul(p.entity_emb.row(1))
            .into_iter()
            .map(|x| x.max(0.0))
            .collect();
        assert_eq!(traj.len(), 4);
        assert!(traj.iter().all(|h| *h == fallback));
    }

    #[test]
    fn trajectory_matches_pointwise_calls() {
        let p = params(4, 2, 4, 5);
        let g = kg(4, vec![Quadruple::new(0, 1, 2, 0), Quadruple::new(3, 0, 0, 2)], 4);
        let cfg = EncoderConfig::default();
        let traj = encode_trajectory(&p, &g, 0, 4, &cfg).unwrap();
        for (i, h) in traj.iter().enumerate() {
            assert_eq!(*h, encode_entity(&p, &g, 0, i as u32 + 1, &cfg).unwrap());
        }
        assert_eq!(encode_trajectory(&p, &g, 0, 1, &cfg).unwrap().len(), 1);
    }

    #[test]
    fn unknown_entity_errors() {
        let p = params(2, 1, 2, 0);
        let g = kg(2, vec![], 1);
        assert!(encode_entity(&p, &g, 5, 0, &EncoderConfig::default()).is_err());
    }

    fn check_grad(layers: usize, seed: u64) {
        let n = 5;
        let quads = vec![
            Quadruple::new(0, 0, 1, 0),
            Quadruple::new(0, 1, 2, 1),
            Quadruple::new(3, 0, 0, 2),
            Quadruple::new(1, 1, 4, 1),
            Quadruple::new(2, 0, 1, 0),
        ];
        let g = kg(n, quads, 5);
        let cfg = EncoderConfig { neighbors: 3, layers };
        let head: Vec<f64> = (0..4).map(|i| 0.3 * i as f64 - 0.4).collect();
        let base = params(n, 2, 4, seed);
        let report = grad_check(
            |p: &NetworkParams<f64>| {
                let mut cache = EncodeCache::new(p, &g, cfg, None);
                let mut loss = 0.0;
                for (e, t) in [(0usize, 3u32), (1, 2), (4, 0)] {
                    let s = cache.encode(e, t)?;
                    let h = cache.output(s).to_vec();
                    loss += dot(&h, &head) + 0.5 * dot(&h, &h);
                    let dh: Vec<f64> = h.iter().zip(&head).map(|(x, c)| x + c).collect();
                    cache.accumulate(s, &dh, 1.0);
                }
                let mut grads = p.zeros_like();
                cache.backward(&mut grads);
                Ok((loss, grads))
            },
            &base,
            1e-5,
            1e-5,
        )
        .unwrap();
        assert!(report.passed, "layers {layers}: {report:?}");
    }

    #[test]
    fn gradients_match_differences() {
        check_grad(1, 11);
        check_grad(2, 12);
    }

    #[test]
    fn dropout_is_seeded() {
        let mut p = params(3, 1, 8, 6);
        p.dropout = 0.5;
        let g = kg(3, vec![Quadruple::new(0, 0, 1, 0)], 3);
        let cfg = EncoderConfig::default();
        let run = |seed| {
            let mut c = EncodeCache::new(&p, &g, cfg, Some(seed));
            let s = c.encode(0, 2).unwrap();
            c.output(s).to_vec()
        };
        assert_eq!(run(1), run(1));
        // evaluation path ignores the rate
        let eval = encode_entity(&p, &g, 0, 2, &cfg).unwrap();
        let mut c = EncodeCache::new(&p, &g, cfg, None);
        let s = c.encode(0, 2).unwrap();
        assert_eq!(c.output(s), eval.as_slice());
    }
}
