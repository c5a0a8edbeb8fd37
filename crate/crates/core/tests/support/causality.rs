//! Randomized checks that encoder outputs at time t and integration rows up
//! to t are unchanged when later inputs change.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tkdistill::alignment::{temporal_integrate, AlignParams};
use tkdistill::encoder::{encode_entity, EncoderConfig, NetworkParams};
use tkg::{Quadruple, TemporalKG, TimeStep, Vocab};

const N: usize = 8;
const SPAN: TimeStep = 12;

fn quads(rng: &mut ChaCha8Rng, offset: TimeStep) -> Vec<Quadruple> {
    let n = rng.gen_range(1..40);
    (0..n)
        .map(|_| Quadruple::new(rng.gen_range(0..N), rng.gen_range(0..2), rng.gen_range(0..N), offset + rng.gen_range(0..SPAN)))
        .collect()
}

/// Number of cases whose encoding at time t moved after adding events at or
/// after t.
pub fn encoder_violations(cases: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bad = 0;
    for _ in 0..cases {
        let t = rng.gen_range(0..SPAN);
        let layers = rng.gen_range(1..=2);
        let p = NetworkParams::<f64>::init(N, 2, 4, 0.0, &mut rng);
        let past = quads(&mut rng, 0);
        let future = quads(&mut rng, t);
        let before = TemporalKG::new(Vocab::numbered("e", N), Vocab::numbered("r", 2), past, 2 * SPAN).unwrap();
        let after = before.extended(future).unwrap();
        let cfg = EncoderConfig { neighbors: 4, layers };
        let e = rng.gen_range(0..N);
        if encode_entity(&p, &before, e, t, &cfg).unwrap() != encode_entity(&p, &after, e, t, &cfg).unwrap() {
            bad += 1;
        }
    }
    bad
}

/// Number of cases where an integration row at or before t moved after the
/// trajectory changed beyond t.
pub fn integration_violations(cases: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let row = |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect() };
    let mut bad = 0;
    for _ in 0..cases {
        let len = rng.gen_range(1..10);
        let t = rng.gen_range(1..=len);
        let a = AlignParams::<f64>::init(4, 0.5, &mut rng);
        let rows: Vec<Vec<f64>> = (0..len).map(|_| row(&mut rng)).collect();
        let mut changed = rows[..t].to_vec();
        let extra = rng.gen_range(0..4) + len - t;
        changed.extend((0..extra).map(|_| row(&mut rng)));
        let h1 = temporal_integrate(&a, &rows).unwrap();
        let h2 = temporal_integrate(&a, &changed).unwrap();
        if (1..=t).any(|i| h1.at(i).unwrap() != h2.at(i).unwrap()) {
            bad += 1;
        }
    }
    bad
}
