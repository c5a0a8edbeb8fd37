//! Brute-force oracle for the exact matching path: every partial one-to-one
//! assignment of a 6×6 table is enumerated.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tkdistill::distill::{generate_pseudo_alignments, Budget, PseudoGenConfig, SimTable};
use tkg::AlignmentSet;

const SIZE: usize = 6;

/// Best total over every partial matching, rows taken in order.
pub fn brute_force(values: &[Vec<f64>], row: usize, used: &mut [bool]) -> f64 {
    if row == values.len() {
        return 0.0;
    }
    let mut best = brute_force(values, row + 1, used);
    for c in 0..used.len() {
        if !used[c] {
            used[c] = true;
            best = best.max(values[row][c] + brute_force(values, row + 1, used));
            used[c] = false;
        }
    }
    best
}

/// Dyadic entries in [-1, 1] so every sum is exact.
fn table(rng: &mut ChaCha8Rng) -> SimTable {
    SimTable {
        sources: (0..SIZE).collect(),
        targets: (100..100 + SIZE).collect(),
        values: (0..SIZE).map(|_| (0..SIZE).map(|_| f64::from(rng.gen_range(-64i32..=64)) / 64.0).collect()).collect(),
        held: BTreeMap::new(),
    }
}

/// Compares the exact matching total with enumeration on `cases` random tables.
pub fn exact_matching_equals_brute_force(cases: usize, seed: u64) -> Result<(), String> {
    let cfg = PseudoGenConfig {
        top_k_budget: Budget::Count(SIZE),
        min_similarity: f64::NEG_INFINITY,
        exact_solver_cap: 256,
        replace_existing: true,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for case in 0..cases {
        let sim = table(&mut rng);
        let out = generate_pseudo_alignments(&sim, &cfg, &AlignmentSet::default(), SIZE).map_err(|e| format!("case {case}: {e}"))?;
        let sources: BTreeSet<_> = out.iter().map(|d| d.pair.source).collect();
        let targets: BTreeSet<_> = out.iter().map(|d| d.pair.target).collect();
        if sources.len() != out.len() || targets.len() != out.len() {
            return Err(format!("case {case}: an entity is matched twice"));
        }
        let total: f64 = out.iter().map(|d| sim.values[d.pair.source][d.pair.target - 100]).sum();
        let oracle = brute_force(&sim.values, 0, &mut [false; SIZE]);
        if total != oracle {
            return Err(format!("case {case}: matching total {total}, enumeration {oracle}"));
        }
    }
    Ok(())
}
