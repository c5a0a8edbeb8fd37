//! Raw ranking metrics, the transfer ratio, a causality audit wrapper and the
//! negative-count decay diagnostic.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tkg::{EntityId, History, Neighbor, Quadruple, RelationId, TimeStep};

use crate::encoder::{encode_all, EncoderConfig, NetworkParams};
use crate::error::{Error, Result};
use crate::numerics::{DenseMatrix, Real};
use crate::scoring::transe_score;

/// 1 + candidates scoring strictly higher + tied candidates with a lower id.
pub fn rank_of<T: Real>(scores: &[T], truth: EntityId) -> usize {
    let s = scores[truth];
    1 + scores
        .iter()
        .enumerate()
        .filter(|&(e, &x)| x > s || (x == s && e < truth))
        .count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuerySide {
    /// `(e, r, ?, t)`.
    Object,
    /// `(?, r, e′, t)`, answered through the reciprocal relation.
    Subject,
}

/// Scores of every candidate for one side of a quadruple, given the
/// representations of all entities at the quadruple's time.
fn candidate_scores<T: Real>(
    params: &NetworkParams<T>,
    states: &DenseMatrix<T>,
    q: &Quadruple,
    side: QuerySide,
) -> Vec<T> {
    let (anchor, r): (EntityId, RelationId) = match side {
        QuerySide::Object => (q.subject, q.relation),
        QuerySide::Subject => (q.object, params.inverse_relation(q.relation)),
    };
    let hs = states.row(anchor);
    let hr = params.relation_emb.row(r);
    (0..states.rows()).map(|o| transe_score(hs, hr, states.row(o))).collect()
}

fn check_quad<T: Real>(params: &NetworkParams<T>, q: &Quadruple) -> Result<()> {
    for e in [q.subject, q.object] {
        if e >= params.entities() {
            return Err(Error::UnknownId { kind: "entity", id: e });
        }
    }
    if q.relation >= params.base_relations {
        return Err(Error::UnknownId { kind: "relation", id: q.relation });
    }
    Ok(())
}

/// Rank of the true answer among all entities, without filtering.
pub fn rank_query<T: Real, H: History + ?Sized>(
    params: &NetworkParams<T>,
    history: &H,
    q: &Quadruple,
    side: QuerySide,
    cfg: &EncoderConfig,
) -> Result<usize> {
    check_quad(params, q)?;
    let states = encode_all(params, history, q.time, cfg);
    let truth = match side {
        QuerySide::Object => q.object,
        QuerySide::Subject => q.subject,
    };
    Ok(rank_of(&candidate_scores(params, &states, q, side), truth))
}

/// `(MRR, Hits@10)` of a rank list.
pub fn metrics_from_ranks(ranks: &[usize]) -> Result<(f64, f64)> {
    if ranks.is_empty() {
        return Err(Error::Empty("rank list"));
    }
    let n = ranks.len() as f64;
    let mrr = ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / n;
    let hits = ranks.iter().filter(|&&r| r <= 10).count() as f64 / n;
    Ok((mrr, hits))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub time: TimeStep,
    pub mrr: f64,
    pub hits10: f64,
    pub queries: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mrr: f64,
    pub hits10: f64,
    pub query_count: usize,
    pub per_step: Vec<StepMetrics>,
    pub config_digest: String,
    pub seed: u64,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("metrics serialize");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Invalid(format!("metrics document: {e}")))
    }

    /// `time,mrr,hits10,queries` rows.
    pub fn per_step_csv(&self) -> String {
        let mut out = String::from("time,mrr,hits10,queries\n");
        for s in &self.per_step {
            out.push_str(&format!("{},{},{},{}\n", s.time, s.mrr, s.hits10, s.queries));
        }
        out
    }
}

/// Ranks of both query sides for every quadruple, grouped by time.
///
/// `history` may contain events at any time; representations for a query at
/// time `t` read only events strictly before `t`.
pub fn evaluate_ranks<T: Real, H: History + ?Sized>(
    params: &NetworkParams<T>,
    history: &H,
    test: &[Quadruple],
    cfg: &EncoderConfig,
) -> Result<BTreeMap<TimeStep, Vec<usize>>> {
    if test.is_empty() {
        return Err(Error::Empty("test set"));
    }
    let mut by_time: BTreeMap<TimeStep, Vec<Quadruple>> = BTreeMap::new();
    for q in test {
        check_quad(params, q)?;
        by_time.entry(q.time).or_default().push(*q);
    }
    let groups: Vec<(TimeStep, Vec<Quadruple>)> = by_time.into_iter().collect();
    let ranks: Vec<(TimeStep, Vec<usize>)> = groups
        .par_iter()
        .map(|(t, quads)| {
            let states = encode_all(params, history, *t, cfg);
            let ranks = quads
                .iter()
                .flat_map(|q| {
                    [(QuerySide::Object, q.object), (QuerySide::Subject, q.subject)]
                        .map(|(side, truth)| rank_of(&candidate_scores(params, &states, q, side), truth))
                })
                .collect();
            (*t, ranks)
        })
        .collect();
    Ok(ranks.into_iter().collect())
}

/// Raw MRR and Hits@10 over both query sides of every test quadruple.
pub fn evaluate<T: Real, H: History + ?Sized>(
    params: &NetworkParams<T>,
    history: &H,
    test: &[Quadruple],
    cfg: &EncoderConfig,
    config_digest: &str,
    seed: u64,
) -> Result<MetricsReport> {
    let by_time = evaluate_ranks(params, history, test, cfg)?;
    let mut all = Vec::new();
    let mut per_step = Vec::new();
    for (time, ranks) in by_time {
        let (mrr, hits10) = metrics_from_ranks(&ranks)?;
        per_step.push(StepMetrics { time, mrr, hits10, queries: ranks.len() });
        all.extend(ranks);
    }
    let (mrr, hits10) = metrics_from_ranks(&all)?;
    Ok(MetricsReport {
        mrr,
        hits10,
        query_count: all.len(),
        per_step,
        config_digest: config_digest.to_string(),
        seed,
    })
}

/// Mean over sources of `model / baseline`.
pub fn transfer_ratio(model_scores: &[f64], baseline: f64) -> Result<f64> {
    if baseline <= 0.0 || !baseline.is_finite() {
        return Err(Error::Invalid(format!("baseline must be positive, got {baseline}")));
    }
    if model_scores.is_empty() {
        return Err(Error::Empty("source scores"));
    }
    Ok(model_scores.iter().map(|m| m / baseline).sum::<f64>() / model_scores.len() as f64)
}

/// History wrapper that counts lookups and every returned entry at or after
/// the lookup time or the optional bound.
pub struct AuditedHistory<'a, H: ?Sized> {
    inner: &'a H,
    bound: Option<TimeStep>,
    reads: AtomicU64,
    violations: AtomicU64,
}

impl<'a, H: History + ?Sized> AuditedHistory<'a, H> {
    pub fn new(inner: &'a H) -> Self {
        Self {
            inner,
            bound: None,
            reads: AtomicU64::new(0),
            violations: AtomicU64::new(0),
        }
    }

    /// Also flags entries at or after `bound`, the time of the queries served.
    pub fn with_bound(inner: &'a H, bound: TimeStep) -> Self {
        Self {
            bound: Some(bound),
            ..Self::new(inner)
        }
    }

    pub fn reads(&self) -> u64 {
        self.reads.load(Ordering::Relaxed)
    }

    pub fn violations(&self) -> u64 {
        self.violations.load(Ordering::Relaxed)
    }
}

impl<H: History + ?Sized> History for AuditedHistory<'_, H> {
    fn entity_count(&self) -> usize {
        self.inner.entity_count()
    }

    fn temporal_neighbors(&self, entity: EntityId, time: TimeStep, limit: usize) -> &[Neighbor] {
        let out = self.inner.temporal_neighbors(entity, time, limit);
        self.reads.fetch_add(1, Ordering::Relaxed);
        let limit = self.bound.map_or(time, |b| b.min(time));
        let bad = out.iter().filter(|n| n.time >= limit).count() as u64;
        if bad > 0 {
            self.violations.fetch_add(bad, Ordering::Relaxed);
        }
        out
    }
}

/// Settings of the negative-count decay diagnostic.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticConfig {
    pub temperature: f64,
    pub negatives: Vec<usize>,
    pub seeds: Vec<u64>,
    pub limit_estimate_n: usize,
}

impl Default for DiagnosticConfig {
    fn default() -> Self {
        Self {
            temperature: 0.5,
            negatives: vec![8, 32, 128, 512],
            seeds: (0..16).collect(),
            limit_estimate_n: 1 << 15,
        }
    }
}

/// Fixed scores for the contrastive toy: a candidate pool for negatives and
/// positive scores for ground-truth and pseudo examples.
#[derive(Debug, Clone, PartialEq)]
pub struct NceToy {
    pub pool: Vec<f64>,
    pub ground_truth: Vec<f64>,
    pub pseudo: Vec<f64>,
    /// Fraction of pseudo examples drawn as correct.
    pub correctness: f64,
}

impl NceToy {
    /// Scores lie in `[-1, 1]`. Correct positives are drawn from the upper
    /// part of the range and wrong pseudo positives from the pool.
    pub fn generate(pool: usize, ground_truth: usize, pseudo_ratio: f64, correctness: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pool_scores: Vec<f64> = (0..pool).map(|_| rng.gen_range(-1.0..0.6)).collect();
        let gt: Vec<f64> = (0..ground_truth).map(|_| rng.gen_range(0.3..1.0)).collect();
        let n_pseudo = (pseudo_ratio * ground_truth as f64).round() as usize;
        let pseudo = (0..n_pseudo)
            .map(|_| {
                if rng.gen::<f64>() < correctness {
                    rng.gen_range(0.3..1.0)
                } else {
                    pool_scores[rng.gen_range(0..pool)]
                }
            })
            .collect();
        Self {
            pool: pool_scores,
            ground_truth: gt,
            pseudo,
            correctness,
        }
    }

    /// Pseudo-to-ground-truth size ratio.
    pub fn ratio(&self) -> f64 {
        self.pseudo.len() as f64 / self.ground_truth.len() as f64
    }

    fn weights(&self) -> (f64, f64) {
        let (g, p) = (self.ground_truth.len() as f64, self.pseudo.len() as f64);
        (g / (g + p), p / (g + p))
    }

    /// Closed-form `lim (L_N - log N)`.
    pub fn limit(&self, tau: f64) -> f64 {
        let z = (self.pool.iter().map(|&f| (f / tau).exp()).sum::<f64>() / self.pool.len() as f64).ln();
        let part = |pos: &[f64]| {
            if pos.is_empty() {
                0.0
            } else {
                z - pos.iter().sum::<f64>() / (tau * pos.len() as f64)
            }
        };
        let (wg, wp) = self.weights();
        wg * part(&self.ground_truth) + wp * part(&self.pseudo)
    }

    /// `L_N - log N` with `n` uniform negatives per positive.
    pub fn shifted_loss(&self, tau: f64, n: usize, rng: &mut impl Rng) -> f64 {
        let mut part = |pos: &[f64]| {
            if pos.is_empty() {
                return 0.0;
            }
            let total: f64 = pos
                .iter()
                .map(|&f| {
                    let p = (f / tau).exp();
                    let negs: f64 = (0..n).map(|_| (self.pool[rng.gen_range(0..self.pool.len())] / tau).exp()).sum();
                    -(p / (p + negs)).ln() - (n as f64).ln()
                })
                .sum();
            total / pos.len() as f64
        };
        let (wg, wp) = self.weights();
        let g = part(&self.ground_truth);
        let p = part(&self.pseudo);
        wg * g + wp * p
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NceSweep {
    /// `(N, median |L_N - L_limit|)`.
    pub rows: Vec<(usize, f64)>,
    pub slope: f64,
    pub limit_estimate: f64,
    pub limit_exact: f64,
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    cov / var
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Median absolute deviation of the shifted contrastive loss from its
/// large-`N` estimate, per negative count.
pub fn nce_deviation_sweep(cfg: &DiagnosticConfig, toy: &NceToy) -> Result<NceSweep> {
    if cfg.negatives.is_empty() || cfg.negatives.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("negative counts must be strictly ascending".into()));
    }
    if cfg.limit_estimate_n <= *cfg.negatives.last().unwrap() {
        return Err(Error::Config("limit_estimate_n must exceed every negative count".into()));
    }
    if cfg.seeds.is_empty() || cfg.temperature <= 0.0 {
        return Err(Error::Config("need seeds and a positive temperature".into()));
    }
    let tau = cfg.temperature;
    let estimates: Vec<f64> = cfg
        .seeds
        .par_iter()
        .map(|&s| toy.shifted_loss(tau, cfg.limit_estimate_n, &mut ChaCha8Rng::seed_from_u64(s ^ 0x9e37_79b9)))
        .collect();
    let limit_estimate = estimates.iter().sum::<f64>() / estimates.len() as f64;
    let rows: Vec<(usize, f64)> = cfg
        .negatives
        .iter()
        .map(|&n| {
            let mut devs: Vec<f64> = cfg
                .seeds
                .par_iter()
                .map(|&s| {
                    let mut rng = ChaCha8Rng::seed_from_u64(s.wrapping_mul(1_000_003).wrapping_add(n as u64));
                    (toy.shifted_loss(tau, n, &mut rng) - limit_estimate).abs()
                })
                .collect();
            (n, median(&mut devs))
        })
        .collect();
    let slope = log_log_slope(&rows.iter().map(|&(n, d)| (n as f64, d)).collect::<Vec<_>>());
    Ok(NceSweep {
        rows,
        slope,
        limit_estimate,
        limit_exact: toy.limit(tau),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_examples() {
        assert_eq!(rank_of(&[0.1, 0.9, 0.3], 1), 1);
        assert_eq!(rank_of(&[0.5, 0.6, 0.7, 0.1], 3), 4);
        // ties count only lower ids
        assert_eq!(rank_of(&[0.5, 0.5, 0.5], 1), 2);
        assert_eq!(rank_of(&[0.5, 0.5, 0.5], 0), 1);
    }

    #[test]
    fn rank_matches_sort_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let scores: Vec<f64> = (0..10).map(|_| rng.gen_range(0..5) as f64).collect();
            let truth = rng.gen_range(0..10);
            let mut order: Vec<usize> = (0..10).collect();
            order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
            let want = order.iter().position(|&e| e == truth).unwrap() + 1;
            assert_eq!(rank_of(&scores, truth), want);
        }
    }

    #[test]
    fn metric_arithmetic() {
        let (mrr, _) = metrics_from_ranks(&[1, 2, 4]).unwrap();
        assert!((mrr - 0.583_333_333_333).abs() < 1e-9);
        assert_eq!(metrics_from_ranks(&[3, 15]).unwrap().1, 0.5);
        assert_eq!(metrics_from_ranks(&[1, 1, 1]).unwrap(), (1.0, 1.0));
        assert!(metrics_from_ranks(&[]).is_err());
    }

    #[test]
    fn transfer_ratio_examples() {
        assert!((transfer_ratio(&[19.51, 19.05], 14.31).unwrap() - 1.35).abs() <= 0.005);
        assert!((transfer_ratio(&[17.58, 17.01], 14.31).unwrap() - 1.21).abs() <= 0.005);
        assert_eq!(transfer_ratio(&[2.0, 2.0], 2.0).unwrap(), 1.0);
        assert!(transfer_ratio(&[1.0], 0.0).is_err());
    }

    #[test]
    fn report_round_trips() {
        let r = MetricsReport {
            mrr: 0.5,
            hits10: 0.75,
            query_count: 4,
            per_step: vec![StepMetrics { time: 3, mrr: 0.5, hits10: 0.75, queries: 4 }],
            config_digest: "abc".into(),
            seed: 9,
        };
        assert_eq!(MetricsReport::from_json(&r.to_json()).unwrap(), r);
        assert_eq!(r.per_step_csv(), "time,mrr,hits10,queries\n3,0.5,0.75,4\n");
    }

    #[test]
    fn nce_limit_matches_large_sample() {
        let toy = NceToy::generate(50, 40, 1.0, 0.8, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let big = toy.shifted_loss(0.5, 1 << 16, &mut rng);
        assert!((big - toy.limit(0.5)).abs() < 0.01);
    }

    #[test]
    fn nce_sweep_rejects_bad_lists() {
        let toy = NceToy::generate(10, 5, 0.0, 1.0, 0);
        let cfg = DiagnosticConfig { negatives: vec![32, 8], ..Default::default() };
        assert!(nce_deviation_sweep(&cfg, &toy).is_err());
    }
}
