use crate::error::{Result, TkgError};
use crate::graph::{EntityId, Quadruple, RelationId, TimeStep};

/// An event valid over the inclusive step range `start..=end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IntervalEvent {
    pub subject: EntityId,
    pub relation: RelationId,
    pub object: EntityId,
    pub start: TimeStep,
    pub end: TimeStep,
}

/// One quadruple per covered step, events in input order.
pub fn expand_intervals(events: &[IntervalEvent]) -> Result<Vec<Quadruple>> {
    let mut out = Vec::new();
    for ev in events {
        if ev.start > ev.end {
            return Err(TkgError::InvertedInterval {
                start: ev.start,
                end: ev.end,
            });
        }
        out.extend((ev.start..=ev.end).map(|t| Quadruple::new(ev.subject, ev.relation, ev.object, t)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(start: u32, end: u32) -> IntervalEvent {
        IntervalEvent {
            subject: 0,
            relation: 0,
            object: 1,
            start,
            end,
        }
    }

    #[test]
    fn degenerate_interval() {
        assert_eq!(expand_intervals(&[ev(3, 3)]).unwrap(), vec![Quadruple::new(0, 0, 1, 3)]);
    }

    #[test]
    fn inclusive_range() {
        let times: Vec<_> = expand_intervals(&[ev(2, 5)]).unwrap().iter().map(|q| q.time).collect();
        assert_eq!(times, vec![2, 3, 4, 5]);
    }

    #[test]
    fn overlapping_events_concatenate() {
        let times: Vec<_> = expand_intervals(&[ev(1, 2), ev(2, 3)])
            .unwrap()
            .iter()
            .map(|q| q.time)
            .collect();
        assert_eq!(times, vec![1, 2, 2, 3]);
    }

    #[test]
    fn inverted_interval_fails() {
        assert!(expand_intervals(&[ev(4, 2)]).is_err());
    }
}
