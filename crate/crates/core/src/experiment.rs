//! Synthetic end-to-end runs and the noise and pseudo-ratio sweeps.

use std::fmt::Write as _;

use tkg::{
    generate_synthetic_pair, inject_alignment_noise, split_by_time, AlignmentSet, Quadruple, SynthConfig, SyntheticPair,
    TemporalKG,
};

use crate::config::TrainConfig;
use crate::encoder::NetworkParams;
use crate::error::{Error, Result};
use crate::eval::{evaluate, median, nce_deviation_sweep, DiagnosticConfig, MetricsReport, NceSweep, NceToy};
use crate::trainer::{encoder_config, pretrain_teacher, train_mpkd, TrainInputs, TrainState};

/// Generator settings and the training template shared by every variant.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub synth: SynthConfig,
    pub train: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            synth: SynthConfig {
                clusters: 20,
                ..SynthConfig::default()
            },
            train: TrainConfig::desk(),
        }
    }
}

/// One synthetic pair split for training, validation and test.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub pair: SyntheticPair,
    pub target_train: TemporalKG,
    pub validation: Vec<Quadruple>,
    pub test: Vec<Quadruple>,
}

impl Prepared {
    pub fn new(synth: &SynthConfig, seed: u64) -> Result<Self> {
        let pair = generate_synthetic_pair(synth, seed)?;
        let parts = split_by_time(&pair.target_incomplete, &synth.split)?;
        Ok(Self {
            target_train: parts.train,
            validation: parts.val.quadruples().to_vec(),
            test: parts.test.quadruples().to_vec(),
            pair,
        })
    }

    pub fn train_steps(&self) -> u32 {
        self.pair.source.horizon()
    }
}

/// Outcome of one trained variant.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub state: TrainState<f64>,
    pub test: MetricsReport,
}

/// Trains a student against a fixed teacher and evaluates it on the test span.
pub fn run_variant(
    data: &Prepared,
    teacher: &NetworkParams<f64>,
    alignments: &AlignmentSet,
    cfg: &TrainConfig,
) -> Result<RunResult> {
    let inputs = TrainInputs {
        source: &data.pair.source,
        target: &data.target_train,
        validation: &data.validation,
        alignments,
        train_steps: data.train_steps(),
    };
    let state = train_mpkd(inputs, teacher.clone(), cfg)?;
    let test = test_metrics(data, &state.student, &state.augmented(&data.target_train)?, cfg)?;
    Ok(RunResult { state, test })
}

/// Test metrics with the training graph, validation span and test span as history.
pub fn test_metrics(
    data: &Prepared,
    student: &NetworkParams<f64>,
    train_graph: &TemporalKG,
    cfg: &TrainConfig,
) -> Result<MetricsReport> {
    let history = train_graph.extended(data.validation.iter().chain(&data.test).copied())?;
    evaluate(student, &history, &data.test, &encoder_config(cfg), &cfg.digest(), cfg.seed)
}

/// Model trained on a target graph alone, with no teacher.
pub fn run_single_model(data: &Prepared, train_graph: &TemporalKG, cfg: &TrainConfig) -> Result<MetricsReport> {
    let single = TrainConfig {
        teacher_epochs: cfg.epochs,
        ..cfg.clone()
    };
    let (params, _) = pretrain_teacher::<f64>(train_graph, &single)?;
    test_metrics(data, &params, train_graph, cfg)
}

/// One CSV row `x,variant,seed,value`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub x: f64,
    pub variant: String,
    pub seed: u64,
    pub value: f64,
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("x,variant,seed,value\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{:.6}", r.x, r.variant, r.seed, r.value);
    }
    s
}

/// Variant name mapped to its ablation (`None` is the full model).
pub fn variant_config(base: &TrainConfig, variant: &str) -> Result<TrainConfig> {
    let mut cfg = base.clone();
    if variant != "full" {
        cfg.set_ablation(variant)?;
    }
    Ok(cfg)
}

fn seeded(base: &TrainConfig, seed: u64) -> TrainConfig {
    TrainConfig { seed, ..base.clone() }
}

/// Seed of the alignment noise drawn for a run seeded with `seed`.
pub fn noise_seed(seed: u64) -> u64 {
    seed ^ 0x0e15e
}

/// Test Hits@10 for every noise ratio, variant and seed.
pub fn noise_sweep(exp: &ExperimentConfig, ratios: &[f64], variants: &[&str], seeds: &[u64]) -> Result<Vec<SweepRow>> {
    if !variants.contains(&"full") || !variants.contains(&"uniform_strength") {
        return Err(Error::Config("noise sweep needs the full and uniform_strength variants".into()));
    }
    let mut rows = Vec::new();
    for &seed in seeds {
        let data = Prepared::new(&exp.synth, seed)?;
        let base = seeded(&exp.train, seed);
        let (teacher, _) = pretrain_teacher::<f64>(&data.pair.source, &base)?;
        for &ratio in ratios {
            let noisy = inject_alignment_noise(&data.pair.alignments, ratio, data.target_train.entities().len(), noise_seed(seed))?;
            for &variant in variants {
                let cfg = variant_config(&base, variant)?;
                let run = run_variant(&data, &teacher, &noisy, &cfg)?;
                rows.push(SweepRow {
                    x: ratio,
                    variant: variant.to_string(),
                    seed,
                    value: run.test.hits10,
                });
            }
        }
    }
    Ok(rows)
}

/// Median over seeds of `(v(0) − v(x)) / v(0)` per (x, variant); a zero
/// baseline gives a drop of 0.
pub fn relative_drops(rows: &[SweepRow]) -> Vec<(f64, String, f64)> {
    let mut keys: Vec<(f64, String)> = Vec::new();
    for r in rows {
        if !keys.iter().any(|(x, v)| *x == r.x && *v == r.variant) {
            keys.push((r.x, r.variant.clone()));
        }
    }
    keys.into_iter()
        .map(|(x, variant)| {
            let mut drops: Vec<f64> = rows
                .iter()
                .filter(|r| r.x == x && r.variant == variant)
                .filter_map(|r| {
                    let base = rows.iter().find(|b| b.x == 0.0 && b.variant == variant && b.seed == r.seed)?;
                    Some(if base.value > 0.0 { (base.value - r.value) / base.value } else { 0.0 })
                })
                .collect();
            let m = if drops.is_empty() { f64::NAN } else { median(&mut drops) };
            (x, variant, m)
        })
        .collect()
}

pub const REFERENCE_FULL_TARGET: &str = "single_full_target";
pub const REFERENCE_INCOMPLETE_TARGET: &str = "single_incomplete_target";

/// Test Hits@10 with the pseudo fraction fixed at each value, plus the two
/// single-model reference lines per seed when `references` is set.
pub fn pseudo_ratio_sweep(
    exp: &ExperimentConfig,
    fractions: &[f64],
    seeds: &[u64],
    references: bool,
) -> Result<Vec<SweepRow>> {
    if fractions.first() != Some(&0.0) || fractions.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("fractions must ascend from 0".into()));
    }
    let mut rows = Vec::new();
    for &seed in seeds {
        let data = Prepared::new(&exp.synth, seed)?;
        let base = seeded(&exp.train, seed);
        let (teacher, _) = pretrain_teacher::<f64>(&data.pair.source, &base)?;
        for &fraction in fractions {
            let cfg = TrainConfig {
                pseudo_fraction_fixed: Some(fraction),
                ..base.clone()
            };
            let run = run_variant(&data, &teacher, &data.pair.alignments, &cfg)?;
            rows.push(SweepRow {
                x: fraction,
                variant: "mpkd".into(),
                seed,
                value: run.test.hits10,
            });
        }
        if references {
            let full_train = split_by_time(&data.pair.target_full, &exp.synth.split)?.train;
            for (name, graph) in [(REFERENCE_FULL_TARGET, &full_train), (REFERENCE_INCOMPLETE_TARGET, &data.target_train)] {
                rows.push(SweepRow {
                    x: 0.0,
                    variant: name.into(),
                    seed,
                    value: run_single_model(&data, graph, &base)?.hits10,
                });
            }
        }
    }
    Ok(rows)
}

/// Median of the rows matching `(x, variant)`.
pub fn median_of(rows: &[SweepRow], x: f64, variant: &str) -> Option<f64> {
    let mut v: Vec<f64> = rows.iter().filter(|r| r.x == x && r.variant == variant).map(|r| r.value).collect();
    (!v.is_empty()).then(|| median(&mut v))
}

/// The contrastive toy used by the decay diagnostic: 200 pool scores, 100
/// ground-truth positives and as many pseudo positives, 80% of them correct.
pub fn fixed_nce_toy() -> NceToy {
    NceToy::generate(200, 100, 1.0, 0.8, 7)
}

/// Deviation of the shifted contrastive loss from its limit for each count.
pub fn nce_decay(negatives: &[usize]) -> Result<NceSweep> {
    let cfg = DiagnosticConfig {
        negatives: negatives.to_vec(),
        ..DiagnosticConfig::default()
    };
    nce_deviation_sweep(&cfg, &fixed_nce_toy())
}

/// `n,median_abs_deviation` rows.
pub fn nce_csv(sweep: &NceSweep) -> String {
    let mut s = String::from("n,median_abs_deviation\n");
    for (n, d) in &sweep.rows {
        let _ = writeln!(s, "{n},{d:.9}");
    }
    s
}
