use crate::error::{Result, TkgError};
use crate::vocab::Vocab;

pub type EntityId = usize;
pub type RelationId = usize;
pub type TimeStep = u32;

/// One time-stamped event `(subject, relation, object, time)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Quadruple {
    pub subject: EntityId,
    pub relation: RelationId,
    pub object: EntityId,
    pub time: TimeStep,
}

impl Quadruple {
    pub fn new(subject: EntityId, relation: RelationId, object: EntityId, time: TimeStep) -> Self {
        Self {
            subject,
            relation,
            object,
            time,
        }
    }
}

/// Adjacency entry: the other endpoint of an event touching the indexed entity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Neighbor {
    pub time: TimeStep,
    pub entity: EntityId,
    pub relation: RelationId,
}

/// Read access to the event history of a graph, as consumed by the encoder.
pub trait History: Sync {
    fn entity_count(&self) -> usize;

    /// Up to `limit` most recent adjacency entries of `entity` strictly before `time`.
    fn temporal_neighbors(&self, entity: EntityId, time: TimeStep, limit: usize) -> &[Neighbor];
}

/// Temporal knowledge graph: vocabularies, a multiset of quadruples and a
/// per-entity chronological adjacency index.
///
/// Each adjacency list is sorted by `(time, neighbor, relation)` and holds one
/// entry per incident quadruple side, so a quadruple appears exactly twice.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalKG {
    entities: Vocab,
    relations: Vocab,
    quadruples: Vec<Quadruple>,
    horizon: TimeStep,
    adjacency: Vec<Vec<Neighbor>>,
}

impl TemporalKG {
    pub fn new(
        entities: Vocab,
        relations: Vocab,
        quadruples: Vec<Quadruple>,
        horizon: TimeStep,
    ) -> Result<Self> {
        for q in &quadruples {
            entities.check(q.subject, "entity")?;
            entities.check(q.object, "entity")?;
            relations.check(q.relation, "relation")?;
            if q.time >= horizon {
                return Err(TkgError::TimeOutOfRange {
                    time: q.time,
                    horizon,
                });
            }
        }
        let adjacency = build_adjacency(entities.len(), &quadruples);
        Ok(Self {
            entities,
            relations,
            quadruples,
            horizon,
            adjacency,
        })
    }

    pub fn empty(entities: Vocab, relations: Vocab, horizon: TimeStep) -> Self {
        let adjacency = vec![Vec::new(); entities.len()];
        Self {
            entities,
            relations,
            quadruples: Vec::new(),
            horizon,
            adjacency,
        }
    }

    pub fn entities(&self) -> &Vocab {
        &self.entities
    }

    pub fn relations(&self) -> &Vocab {
        &self.relations
    }

    pub fn quadruples(&self) -> &[Quadruple] {
        &self.quadruples
    }

    pub fn len(&self) -> usize {
        self.quadruples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.quadruples.is_empty()
    }

    pub fn horizon(&self) -> TimeStep {
        self.horizon
    }

    pub fn adjacency(&self, entity: EntityId) -> &[Neighbor] {
        &self.adjacency[entity]
    }

    pub fn adjacency_len(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum()
    }

    /// Same vocabularies and horizon, different events.
    pub fn with_quadruples(&self, quadruples: Vec<Quadruple>) -> Result<Self> {
        Self::new(
            self.entities.clone(),
            self.relations.clone(),
            quadruples,
            self.horizon,
        )
    }

    /// Union with additional events (multiset semantics).
    pub fn extended<I: IntoIterator<Item = Quadruple>>(&self, extra: I) -> Result<Self> {
        let mut quads = self.quadruples.clone();
        quads.extend(extra);
        self.with_quadruples(quads)
    }

    /// Copy with the horizon changed; fails if any event falls outside it.
    pub fn with_horizon(&self, horizon: TimeStep) -> Result<Self> {
        Self::new(
            self.entities.clone(),
            self.relations.clone(),
            self.quadruples.clone(),
            horizon,
        )
    }

    pub fn dedup(&self) -> Self {
        let mut seen = std::collections::HashSet::new();
        let quads: Vec<_> = self
            .quadruples
            .iter()
            .copied()
            .filter(|q| seen.insert(*q))
            .collect();
        let adjacency = build_adjacency(self.entities.len(), &quads);
        Self {
            entities: self.entities.clone(),
            relations: self.relations.clone(),
            quadruples: quads,
            horizon: self.horizon,
            adjacency,
        }
    }

    /// Up to `limit` latest adjacency entries with time strictly below `time`.
    /// Ties on time resolve by the adjacency order, keeping the later entries.
    pub fn temporal_neighbors(&self, entity: EntityId, time: TimeStep, limit: usize) -> &[Neighbor] {
        let adj = &self.adjacency[entity];
        let end = adj.partition_point(|n| n.time < time);
        &adj[end.saturating_sub(limit)..end]
    }

    /// Entities sharing at least one event with `entity` (any time, sorted, unique).
    pub fn graph_neighbors(&self, entity: EntityId) -> Vec<EntityId> {
        let mut out: Vec<_> = self.adjacency[entity].iter().map(|n| n.entity).collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

impl History for TemporalKG {
    fn entity_count(&self) -> usize {
        self.entities.len()
    }

    fn temporal_neighbors(&self, entity: EntityId, time: TimeStep, limit: usize) -> &[Neighbor] {
        TemporalKG::temporal_neighbors(self, entity, time, limit)
    }
}

fn build_adjacency(n_entities: usize, quads: &[Quadruple]) -> Vec<Vec<Neighbor>> {
    let mut adj = vec![Vec::new(); n_entities];
    for q in quads {
        adj[q.subject].push(Neighbor {
            time: q.time,
            entity: q.object,
            relation: q.relation,
        });
        adj[q.object].push(Neighbor {
            time: q.time,
            entity: q.subject,
            relation: q.relation,
        });
    }
    for list in &mut adj {
        list.sort_unstable();
    }
    adj
}
