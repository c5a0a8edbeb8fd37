use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, TkgError};
use crate::graph::{TemporalKG, TimeStep};

/// Contiguous train/validation/test partition of the time axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSpec {
    pub total_steps: TimeStep,
    pub train_steps: TimeStep,
    pub val_steps: TimeStep,
    pub test_steps: TimeStep,
}

impl SplitSpec {
    pub fn new(total: TimeStep, train: TimeStep, val: TimeStep, test: TimeStep) -> Result<Self> {
        let spec = Self {
            total_steps: total,
            train_steps: train,
            val_steps: val,
            test_steps: test,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.train_steps as u64 + self.val_steps as u64 + self.test_steps as u64
            != self.total_steps as u64
        {
            return Err(TkgError::InconsistentSplit {
                total: self.total_steps,
                train: self.train_steps,
                val: self.val_steps,
                test: self.test_steps,
            });
        }
        Ok(())
    }

    pub fn val_start(&self) -> TimeStep {
        self.train_steps
    }

    pub fn test_start(&self) -> TimeStep {
        self.train_steps + self.val_steps
    }
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            total_steps: 40,
            train_steps: 28,
            val_steps: 4,
            test_steps: 8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Splits {
    pub train: TemporalKG,
    pub val: TemporalKG,
    pub test: TemporalKG,
}

/// Partitions events by time; every part keeps the full vocabularies and horizon.
pub fn split_by_time(kg: &TemporalKG, spec: &SplitSpec) -> Result<Splits> {
    spec.validate()?;
    if kg.horizon() != spec.total_steps {
        return Err(TkgError::HorizonMismatch {
            total: spec.total_steps,
            horizon: kg.horizon(),
        });
    }
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for &q in kg.quadruples() {
        if q.time < spec.val_start() {
            train.push(q);
        } else if q.time < spec.test_start() {
            val.push(q);
        } else {
            test.push(q);
        }
    }
    Ok(Splits {
        train: kg.with_quadruples(train)?,
        val: kg.with_quadruples(val)?,
        test: kg.with_quadruples(test)?,
    })
}

/// Keeps each quadruple independently with probability `ratio`.
pub fn subsample_events(kg: &TemporalKG, ratio: f64, seed: u64) -> Result<TemporalKG> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(TkgError::BadRatio(ratio));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kept = kg
        .quadruples()
        .iter()
        .copied()
        .filter(|_| rng.gen::<f64>() < ratio)
        .collect();
    kg.with_quadruples(kept)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Quadruple;
    use crate::vocab::Vocab;

    fn kg_over(times: &[u32], horizon: u32) -> TemporalKG {
        let quads = times.iter().map(|&t| Quadruple::new(0, 0, 1, t)).collect();
        TemporalKG::new(Vocab::numbered("e", 2), Vocab::numbered("r", 1), quads, horizon).unwrap()
    }

    #[test]
    fn boundaries() {
        let kg = kg_over(&[27, 28, 31, 32, 39], 40);
        let s = split_by_time(&kg, &SplitSpec::default()).unwrap();
        let times = |k: &TemporalKG| k.quadruples().iter().map(|q| q.time).collect::<Vec<_>>();
        assert_eq!(times(&s.train), vec![27]);
        assert_eq!(times(&s.val), vec![28, 31]);
        assert_eq!(times(&s.test), vec![32, 39]);
        assert_eq!(s.train.entities().len(), 2);
    }

    #[test]
    fn all_train() {
        let kg = kg_over(&[0, 1, 2, 3], 4);
        let s = split_by_time(&kg, &SplitSpec::new(4, 4, 0, 0).unwrap()).unwrap();
        assert_eq!(s.train.len(), 4);
        assert!(s.val.is_empty() && s.test.is_empty());
    }

    #[test]
    fn inconsistent_specs() {
        assert!(SplitSpec::new(40, 28, 4, 9).is_err());
        let kg = kg_over(&[0], 10);
        assert!(matches!(
            split_by_time(&kg, &SplitSpec::default()),
            Err(TkgError::HorizonMismatch { .. })
        ));
    }

    #[test]
    fn subsample_ratio_one_is_identity() {
        let kg = kg_over(&[0, 1, 2, 3, 3], 4);
        assert_eq!(subsample_events(&kg, 1.0, 5).unwrap(), kg);
    }

    #[test]
    fn subsample_rejects_bad_ratio() {
        let kg = kg_over(&[0], 1);
        assert!(subsample_events(&kg, 0.0, 1).is_err());
        assert!(subsample_events(&kg, 1.01, 1).is_err());
        assert!(subsample_events(&kg, f64::NAN, 1).is_err());
    }
}
