//! Central-difference checks of the reasoning, alignment and combined losses
//! on small random problems (10 entities, d = 8). Shared by the gradient
//! tests and the acceptance suite.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tkdistill::alignment::{alignment_loss, sample_alignment_negatives, strength_table, AlignParams, AlignSample, Strength};
use tkdistill::encoder::{encode_trajectories, EncodeCache, EncoderConfig, NetworkParams};
use tkdistill::numerics::grad_check;
use tkdistill::scoring::{reasoning_loss_on, sample_instances, CorruptMode, Instance, NegativeSamplerConfig};
use tkdistill::trainer::{combined_loss, CombinedBatch, JointParams, LossWeights, Margins, StrengthChoice};
use tkg::{AlignmentSet, EntityId, Quadruple, TemporalKG, Vocab};

const N: usize = 10;
const D: usize = 8;
const STEPS: u32 = 5;
const STEP: f64 = 1e-5;
const TOL: f64 = 1e-5;
/// Minimum distance of every hinge and ReLU argument from its kink.
const KINK: f64 = 1e-3;

fn enc() -> EncoderConfig {
    EncoderConfig { neighbors: 3, layers: 1 }
}

fn random_graph(rng: &mut ChaCha8Rng) -> TemporalKG {
    let quads = (0..24)
        .map(|_| Quadruple::new(rng.gen_range(0..N), rng.gen_range(0..2), rng.gen_range(0..N), rng.gen_range(0..STEPS)))
        .filter(|q| q.subject != q.object)
        .collect();
    TemporalKG::new(Vocab::numbered("e", N), Vocab::numbered("r", 2), quads, STEPS).unwrap()
}

fn instances(p: &NetworkParams<f64>, g: &TemporalKG, rng: &mut ChaCha8Rng, n: usize) -> Vec<Instance> {
    let neg = NegativeSamplerConfig { factor: 3, corrupt_mode: CorruptMode::BothSides, seed: 0 };
    let batch: Vec<Quadruple> = g.quadruples().iter().copied().filter(|q| q.time > 0).take(n).collect();
    sample_instances(p, &batch, &neg, rng).unwrap()
}

fn reasoning(p: &NetworkParams<f64>, g: &TemporalKG, inst: &[Instance]) -> tkdistill::Result<(f64, f64, NetworkParams<f64>)> {
    let mut cache = EncodeCache::new(p, g, enc(), None);
    let v = reasoning_loss_on(&mut cache, inst, 0.5, 1.0)?;
    let mut grads = p.zeros_like();
    let gap = v.kink_gap.min(cache.relu_gap());
    cache.backward(&mut grads);
    Ok((v.value, gap, grads))
}

/// Draws toys for `seed` until one keeps every kink at distance `KINK`.
fn kink_free<X>(seed: u64, mut build: impl FnMut(&mut ChaCha8Rng) -> Option<X>) -> X {
    for attempt in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed * 1000 + attempt);
        if let Some(x) = build(&mut rng) {
            return x;
        }
    }
    panic!("no kink-free toy for seed {seed}");
}

pub fn reasoning_loss_gradients(seeds: u64) -> Result<(), String> {
    for seed in 0..seeds {
        let (p, g, inst) = kink_free(seed, |rng| {
            let p = NetworkParams::<f64>::init(N, 2, D, 0.0, rng);
            let g = random_graph(rng);
            let inst = instances(&p, &g, rng, 5);
            let (v, gap, _) = reasoning(&p, &g, &inst).ok()?;
            (gap > KINK && v > 0.0).then_some((p, g, inst))
        });
        let report = grad_check(
            |q: &NetworkParams<f64>| reasoning(q, &g, &inst).map(|(v, _, gr)| (v, gr)),
            &p,
            STEP,
            TOL,
        )
        .unwrap();
        if !report.passed {
            return Err(format!("seed {seed}: {report:?}"));
        }
    }
    Ok(())
}

fn random_trajs(rng: &mut ChaCha8Rng, ids: impl Iterator<Item = EntityId>) -> BTreeMap<EntityId, Vec<Vec<f64>>> {
    ids.map(|e| (e, (0..STEPS).map(|_| (0..D).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect()))
        .collect()
}

struct AlignToy {
    params: AlignParams<f64>,
    sources: BTreeMap<EntityId, Vec<Vec<f64>>>,
    targets: BTreeMap<EntityId, Vec<Vec<f64>>>,
    samples: Vec<AlignSample>,
    beta: Vec<Vec<f64>>,
}

fn align_toy(rng: &mut ChaCha8Rng) -> Option<AlignToy> {
    let params = AlignParams::<f64>::init(D, 0.3, rng);
    let sources = random_trajs(rng, 0..N);
    let targets = random_trajs(rng, 0..N);
    let pairs: Vec<(EntityId, EntityId)> = (0..4).map(|i| (i, (i + 3) % N)).collect();
    let samples = sample_alignment_negatives(&pairs, N, 3, &AlignmentSet::default(), rng);
    let beta = strength_table(&params, &sources, &targets, &samples).ok()?;
    let out = alignment_loss(&params, &sources, &targets, &samples, 0.5, Strength::Fixed(&beta)).ok()?;
    (out.value.kink_gap > KINK && out.value.value > 0.0).then_some(AlignToy { params, sources, targets, samples, beta })
}

pub fn alignment_loss_gradients_wrt_transforms(seeds: u64) -> Result<(), String> {
    for seed in 0..seeds {
        let toy = kink_free(seed, align_toy);
        let report = grad_check(
            |p: &AlignParams<f64>| {
                let out = alignment_loss(p, &toy.sources, &toy.targets, &toy.samples, 0.5, Strength::Fixed(&toy.beta))?;
                Ok((out.value.value, out.grad_params))
            },
            &toy.params,
            STEP,
            TOL,
        )
        .unwrap();
        if !report.passed {
            return Err(format!("seed {seed}: {report:?}"));
        }
    }
    Ok(())
}

pub fn alignment_loss_gradients_wrt_target_trajectories(seeds: u64) -> Result<(), String> {
    for seed in 0..seeds {
        let toy = kink_free(seed, align_toy);
        let ids: Vec<EntityId> = toy.targets.keys().copied().collect();
        let flat: Vec<f64> = toy.targets.values().flatten().flatten().copied().collect();
        let unflatten = |x: &[f64]| -> BTreeMap<EntityId, Vec<Vec<f64>>> {
            let rows: Vec<Vec<f64>> = x.chunks(D).map(<[f64]>::to_vec).collect();
            ids.iter().zip(rows.chunks(STEPS as usize)).map(|(&e, r)| (e, r.to_vec())).collect()
        };
        let report = grad_check(
            |x: &Vec<f64>| {
                let out = alignment_loss(&toy.params, &toy.sources, &unflatten(x), &toy.samples, 0.5, Strength::Fixed(&toy.beta))?;
                let mut g = vec![0.0; x.len()];
                for (k, e) in ids.iter().enumerate() {
                    if let Some(rows) = out.grad_targets.get(e) {
                        let off = k * STEPS as usize * D;
                        for (j, v) in rows.iter().flatten().enumerate() {
                            g[off + j] = *v;
                        }
                    }
                }
                Ok((out.value.value, g))
            },
            &flat,
            STEP,
            TOL,
        )
        .unwrap();
        if !report.passed {
            return Err(format!("seed {seed}: {report:?}"));
        }
    }
    Ok(())
}

struct CombinedToy {
    joint: JointParams<f64>,
    teacher: BTreeMap<EntityId, Vec<Vec<f64>>>,
    graph: TemporalKG,
    inst: [Vec<Instance>; 2],
    samples: [Vec<AlignSample>; 2],
    beta: [Vec<Vec<f64>>; 2],
}

fn combined_value(toy: &CombinedToy, joint: &JointParams<f64>) -> tkdistill::Result<(f64, f64, JointParams<f64>)> {
    let weights = LossWeights::from_sizes(5, 3, 4, 2)?;
    let batch = CombinedBatch {
        graph: &toy.inst[0],
        graph_st: &toy.inst[1],
        align: &toy.samples[0],
        align_st: &toy.samples[1],
    };
    let out = combined_loss(
        &joint.student,
        &joint.align,
        &toy.teacher,
        &toy.graph,
        &enc(),
        STEPS,
        batch,
        &weights,
        Margins { reasoning: 0.5, alignment: 0.5 },
        StrengthChoice::Fixed { align: &toy.beta[0], align_st: &toy.beta[1] },
        None,
    )?;
    Ok((out.value, out.kink_gap, JointParams { student: out.student, align: out.align }))
}

fn combined_toy(rng: &mut ChaCha8Rng) -> Option<CombinedToy> {
    let student = NetworkParams::<f64>::init(N, 2, D, 0.0, rng);
    let align = AlignParams::<f64>::init(D, 0.3, rng);
    let graph = random_graph(rng);
    let teacher = random_trajs(rng, 0..N);
    let inst = [instances(&student, &graph, rng, 5), instances(&student, &graph, rng, 3)];
    let none = AlignmentSet::default();
    let samples = [
        sample_alignment_negatives(&[(0, 1), (2, 3), (4, 5), (6, 7)], N, 2, &none, rng),
        sample_alignment_negatives(&[(8, 9), (1, 0)], N, 2, &none, rng),
    ];
    let ids: Vec<EntityId> = (0..N).collect();
    let st: BTreeMap<_, _> = ids.iter().copied().zip(encode_trajectories(&student, &graph, &ids, STEPS, &enc()).ok()?).collect();
    let beta = [
        strength_table(&align, &teacher, &st, &samples[0]).ok()?,
        strength_table(&align, &teacher, &st, &samples[1]).ok()?,
    ];
    let toy = CombinedToy { joint: JointParams { student, align }, teacher, graph, inst, samples, beta };
    let (v, gap, _) = combined_value(&toy, &toy.joint).ok()?;
    (gap > KINK && v > 0.0).then_some(toy)
}

pub fn combined_loss_gradients(seeds: u64) -> Result<(), String> {
    for seed in 0..seeds {
        let toy = kink_free(seed, combined_toy);
        let report = grad_check(|j: &JointParams<f64>| combined_value(&toy, j).map(|(v, _, g)| (v, g)), &toy.joint, STEP, TOL).unwrap();
        if !report.passed {
            return Err(format!("seed {seed}: {report:?}"));
        }
    }
    Ok(())
}
