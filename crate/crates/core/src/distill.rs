//! Knowledge transfer: pseudo alignments chosen by a one-to-one assignment
//! over mean similarities, and source events carried into the target graph.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;

use tkg::{AlignmentPair, AlignmentSet, EntityId, History, Provenance, Quadruple, TemporalKG, TimeStep, Vocab};

use crate::alignment::{correspondence, TemporalIntegration};
use crate::encoder::{encode_all, EncoderConfig, NetworkParams};
use crate::error::{Error, Result};
use crate::numerics::{DenseMatrix, Real};
use crate::scoring::transe_score;

/// `sim(e_s, e_t)`: mean correspondence over every time step.
pub fn mean_similarity<T: Real>(hs: &TemporalIntegration<T>, ht: &TemporalIntegration<T>) -> Result<T> {
    if hs.is_empty() || hs.len() != ht.len() {
        return Err(Error::Shape("integrations must cover the same nonempty span".into()));
    }
    let mut total = T::zero();
    for t in 1..=hs.len() {
        total += correspondence(hs, ht, t)?;
    }
    Ok(total / T::lit(hs.len() as f64))
}

/// Maximum-weight one-to-one partial matching of a dense table.
///
/// Pairs with nonpositive weight never help a partial matching, so weights are
/// clamped at zero, the square assignment is solved with the shortest
/// augmenting path method, and zero-weight pairs are dropped afterwards.
/// Returns `(row, col)` pairs sorted by row.
pub fn max_weight_matching(table: &[Vec<f64>]) -> Vec<(usize, usize)> {
    let rows = table.len();
    let cols = table.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return Vec::new();
    }
    let transpose = rows > cols;
    let (n, m) = if transpose { (cols, rows) } else { (rows, cols) };
    let weight = |i: usize, j: usize| {
        let w = if transpose { table[j][i] } else { table[i][j] };
        w.max(0.0)
    };
    // potentials and matching, 1-based with a virtual column 0
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = -weight(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out: Vec<(usize, usize)> = (1..=m)
        .filter(|&j| owner[j] != 0)
        .map(|j| if transpose { (j - 1, owner[j] - 1) } else { (owner[j] - 1, j - 1) })
        .filter(|&(r, c)| table[r][c] > 0.0)
        .collect();
    out.sort_unstable();
    out
}

/// Greedy matching by descending weight; ties go to the lower row, then the
/// lower column.
pub fn greedy_matching(table: &[Vec<f64>]) -> Vec<(usize, usize)> {
    let mut cells: Vec<(usize, usize)> = table
        .iter()
        .enumerate()
        .flat_map(|(r, row)| row.iter().enumerate().filter(|(_, &w)| w > 0.0).map(move |(c, _)| (r, c)))
        .collect();
    cells.sort_by(|a, b| table[b.0][b.1].total_cmp(&table[a.0][a.1]).then(a.cmp(b)));
    let mut row_used = vec![false; table.len()];
    let mut col_used = vec![false; table.first().map_or(0, Vec::len)];
    let mut out = Vec::new();
    for (r, c) in cells {
        if !row_used[r] && !col_used[c] {
            row_used[r] = true;
            col_used[c] = true;
            out.push((r, c));
        }
    }
    out.sort_unstable();
    out
}

/// Candidate similarities between eligible sources and candidate targets.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTable {
    pub sources: Vec<EntityId>,
    pub targets: Vec<EntityId>,
    /// `values[i][j] = sim(sources[i], targets[j])`.
    pub values: Vec<Vec<f64>>,
    /// Mean similarity of the ground-truth pair currently holding a target.
    pub held: BTreeMap<EntityId, f64>,
}

impl SimTable {
    pub fn validate(&self) -> Result<()> {
        if self.values.len() != self.sources.len() || self.values.iter().any(|r| r.len() != self.targets.len()) {
            return Err(Error::Shape("similarity table does not match its labels".into()));
        }
        if self.values.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Invalid("non-finite similarity".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Budget {
    Count(usize),
    /// Fraction of the target vocabulary.
    Fraction(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PseudoGenConfig {
    pub top_k_budget: Budget,
    pub min_similarity: f64,
    pub exact_solver_cap: usize,
    pub replace_existing: bool,
}

impl Default for PseudoGenConfig {
    fn default() -> Self {
        Self {
            top_k_budget: Budget::Fraction(0.1),
            min_similarity: 0.0,
            exact_solver_cap: 256,
            replace_existing: true,
        }
    }
}

impl PseudoGenConfig {
    pub fn budget(&self, target_vocab: usize) -> usize {
        match self.top_k_budget {
            Budget::Count(k) => k,
            Budget::Fraction(f) => (f * target_vocab as f64).round() as usize,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PseudoAction {
    Add,
    /// Displaces the ground-truth pair whose source is given.
    Replace { displaced: EntityId },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoDecision {
    pub pair: AlignmentPair,
    pub action: PseudoAction,
}

/// Chooses a one-to-one set of pseudo pairs from `sim`.
///
/// `target_vocab` sizes a fractional budget. A target already held by a pair
/// in `existing` is taken only under `replace_existing` and only when the new
/// similarity beats the held one.
pub fn generate_pseudo_alignments(
    sim: &SimTable,
    cfg: &PseudoGenConfig,
    existing: &AlignmentSet,
    target_vocab: usize,
) -> Result<Vec<PseudoDecision>> {
    if cfg.exact_solver_cap == 0 {
        return Err(Error::Config("exact_solver_cap must be at least 1".into()));
    }
    sim.validate()?;
    if sim.sources.is_empty() || sim.targets.is_empty() {
        return Ok(Vec::new());
    }
    let block = sim.sources.len().max(sim.targets.len());
    let matched = if block <= cfg.exact_solver_cap {
        max_weight_matching(&sim.values)
    } else {
        greedy_matching(&sim.values)
    };
    let mut chosen: Vec<(EntityId, EntityId, f64)> = matched
        .into_iter()
        .map(|(r, c)| (sim.sources[r], sim.targets[c], sim.values[r][c]))
        .collect();
    chosen.sort_by(|a, b| b.2.total_cmp(&a.2).then((a.0, a.1).cmp(&(b.0, b.1))));
    chosen.truncate(cfg.budget(target_vocab));
    let mut out = Vec::new();
    for (s, t, w) in chosen {
        if w < cfg.min_similarity {
            continue;
        }
        let holder = existing
            .iter()
            .find(|p| p.target == t && p.provenance == Provenance::GroundTruth)
            .map(|p| p.source);
        let action = match holder {
            None => PseudoAction::Add,
            Some(displaced) => {
                let held = sim.held.get(&t).copied().unwrap_or(f64::INFINITY);
                if cfg.replace_existing && w > held {
                    PseudoAction::Replace { displaced }
                } else {
                    continue;
                }
            }
        };
        out.push(PseudoDecision {
            pair: AlignmentPair::pseudo(s, t, w),
            action,
        });
    }
    Ok(out)
}

/// Graph neighbors, within `kg`, of the targets in `aligned`.
pub fn candidate_targets(kg: &TemporalKG, aligned: &BTreeSet<EntityId>) -> BTreeSet<EntityId> {
    aligned.iter().flat_map(|&t| kg.graph_neighbors(t)).collect()
}

/// Audit lines `round, source, target, similarity, action`.
pub fn audit_lines(round: usize, decisions: &[PseudoDecision], sources: &Vocab, targets: &Vocab) -> String {
    let mut out = String::new();
    for d in decisions {
        let action = match d.action {
            PseudoAction::Add => "add",
            PseudoAction::Replace { .. } => "replace",
        };
        let _ = writeln!(
            out,
            "{round}\t{}\t{}\t{:.6}\t{action}",
            sources.name(d.pair.source),
            targets.name(d.pair.target),
            d.pair.confidence
        );
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TransferMechanism {
    AlignmentLookup,
    StudentTop1,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransferRecord {
    pub added: Quadruple,
    pub origin: Quadruple,
    pub mechanism: TransferMechanism,
    pub round: usize,
}

/// Carries source events of aligned entities into the target graph.
///
/// An event with both endpoints aligned maps through the alignment. An event
/// with one aligned endpoint is completed by the student's top-1 entity,
/// scored on `target_history`, at most once per origin event, when
/// `complete_unaligned` is set. Output never
/// repeats a quadruple of `target` or of `already`.
#[allow(clippy::too_many_arguments)]
pub fn transfer_events<T: Real, H: History + ?Sized>(
    source: &TemporalKG,
    target: &TemporalKG,
    target_history: &H,
    alignments: &AlignmentSet,
    student: &NetworkParams<T>,
    cfg: &EncoderConfig,
    horizon: TimeStep,
    round: usize,
    already: &[TransferRecord],
    complete_unaligned: bool,
) -> Result<Vec<TransferRecord>> {
    let mut map: BTreeMap<EntityId, EntityId> = BTreeMap::new();
    for p in alignments.iter() {
        map.entry(p.source).or_insert(p.target);
    }
    let mut seen: HashSet<Quadruple> = target.quadruples().iter().copied().collect();
    seen.extend(already.iter().map(|r| r.added));
    let mut completed: HashSet<Quadruple> = already
        .iter()
        .filter(|r| r.mechanism == TransferMechanism::StudentTop1)
        .map(|r| r.origin)
        .collect();
    let mut states: BTreeMap<TimeStep, DenseMatrix<T>> = BTreeMap::new();
    let mut out = Vec::new();
    for &origin in source.quadruples() {
        let Quadruple { subject, relation, object, time } = origin;
        if time >= horizon || relation >= student.base_relations {
            continue;
        }
        let (added, mechanism) = match (map.get(&subject), map.get(&object)) {
            (Some(&a), Some(&b)) => (Quadruple::new(a, relation, b, time), TransferMechanism::AlignmentLookup),
            (None, None) => continue,
            _ if !complete_unaligned => continue,
            (anchor_s, anchor_o) => {
                if !completed.insert(origin) {
                    continue;
                }
                let h = states
                    .entry(time)
                    .or_insert_with(|| encode_all(student, target_history, time, cfg));
                let q = match (anchor_s, anchor_o) {
                    (Some(&a), _) => Quadruple::new(a, relation, top1(h, student.relation_emb.row(relation), a), time),
                    (_, Some(&b)) => {
                        let inv = student.inverse_relation(relation);
                        Quadruple::new(top1(h, student.relation_emb.row(inv), b), relation, b, time)
                    }
                    _ => unreachable!(),
                };
                (q, TransferMechanism::StudentTop1)
            }
        };
        if seen.insert(added) {
            out.push(TransferRecord { added, origin, mechanism, round });
        }
    }
    Ok(out)
}

/// Highest-scoring object for `(e, r, ?)`; ties go to the lower id.
fn top1<T: Real>(h: &DenseMatrix<T>, hr: &[T], e: EntityId) -> EntityId {
    let hs = h.row(e);
    let mut best = 0;
    let mut best_score = T::neg_infinity();
    for o in 0..h.rows() {
        let s = transe_score(hs, hr, h.row(o));
        if s > best_score {
            best_score = s;
            best = o;
        }
    }
    best
}

/// Mean-similarity table over every (source, target) combination.
pub fn similarity_table<T: Real>(
    sources: &[(EntityId, TemporalIntegration<T>)],
    targets: &[(EntityId, TemporalIntegration<T>)],
) -> Result<SimTable> {
    use rayon::prelude::*;
    let values = sources
        .par_iter()
        .map(|(_, hs)| {
            targets
                .iter()
                .map(|(_, ht)| mean_similarity(hs, ht).map(|x| x.as_f64()).or_else(|e| match e {
                    Error::UndefinedCosine => Ok(0.0),
                    e => Err(e),
                }))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SimTable {
        sources: sources.iter().map(|(e, _)| *e).collect(),
        targets: targets.iter().map(|(e, _)| *e).collect(),
        values,
        held: BTreeMap::new(),
    })
}
