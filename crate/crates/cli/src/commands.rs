//! Command implementations.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde_json::{json, Map, Value};
use tkdistill::checkpoint::Checkpoint;
use tkdistill::config::TrainConfig;
use tkdistill::eval::evaluate;
use tkdistill::experiment::{
    nce_csv, nce_decay, noise_sweep, pseudo_ratio_sweep, relative_drops, sweep_csv, ExperimentConfig,
};
use tkdistill::trainer::{encoder_config, pretrain_teacher, train_mpkd, TrainInputs};
use tkg::io::{dump_alignments, dump_quadruples, dump_vocab, parse_vocab, read_file};
use tkg::{generate_synthetic_pair, split_by_time, Quadruple, SynthConfig, TemporalKG};

use crate::files::{default_split, load_inputs, load_strict, parse_list, parse_split, OutDir};
use crate::{Common, EvalArgs, ExperimentArgs, Preset, SynthArgs, TrainArgs};

pub const EXPERIMENTS: [&str; 3] = ["noise", "pseudo-ratio", "nce-decay"];

pub fn init_threads(threads: Option<usize>) -> Result<()> {
    if let Some(n) = threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    Ok(())
}

/// `key = value` text as a JSON object of strings.
fn kv_json(text: &str) -> Value {
    let map: Map<String, Value> = text
        .lines()
        .filter_map(|l| l.split_once(" = "))
        .map(|(k, v)| (k.to_string(), json!(v)))
        .collect();
    Value::Object(map)
}

pub fn synth(args: &SynthArgs, common: &Common) -> Result<()> {
    let split = match &args.split {
        Some(s) => parse_split(s)?,
        None => default_split(args.steps)?,
    };
    if split.total_steps != args.steps {
        bail!("split sums to {} but --steps is {}", split.total_steps, args.steps);
    }
    let cfg = SynthConfig {
        source_entities: args.entities,
        target_entities: args.target_entities.unwrap_or(args.entities),
        relations: args.relations,
        split,
        events_per_step: args.events_per_step,
        copy_prob: args.copy_prob,
        coverage: args.coverage,
        target_ratio: args.target_ratio,
        clusters: args.clusters,
        ..SynthConfig::default()
    };
    let seed = common.seed.unwrap_or(0);
    let pair = generate_synthetic_pair(&cfg, seed)?;
    let mut out = OutDir::create(&common.out)?;
    out.write("source.tsv", dump_quadruples(&pair.source))?;
    out.write("target.tsv", dump_quadruples(&pair.target_incomplete))?;
    out.write(
        "alignments.tsv",
        dump_alignments(&pair.alignments, pair.source.entities(), pair.target_incomplete.entities()),
    )?;
    out.finish(json!({
        "command": "synth",
        "seed": seed,
        "config": {
            "source_entities": cfg.source_entities,
            "target_entities": cfg.target_entities,
            "relations": cfg.relations,
            "split": [split.train_steps, split.val_steps, split.test_steps],
            "events_per_step": cfg.events_per_step,
            "copy_prob": cfg.copy_prob,
            "coverage": cfg.coverage,
            "target_ratio": cfg.target_ratio,
            "clusters": cfg.clusters,
        },
        "counts": {
            "source_events": pair.source.len(),
            "target_events": pair.target_incomplete.len(),
            "alignments": pair.alignments.len(),
        },
    }))
}

/// Preset, then config file, then ablations and seed flags.
fn train_config(preset: Preset, file: Option<&Path>, ablations: &[String], seed: Option<u64>) -> Result<TrainConfig> {
    let mut cfg = match preset {
        Preset::Desk => TrainConfig::desk(),
        Preset::Reference => TrainConfig::default(),
    };
    if let Some(path) = file {
        cfg.apply(&read_file(path)?).with_context(|| format!("in {}", path.display()))?;
    }
    for a in ablations {
        cfg.set_ablation(a)?;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn train(args: &TrainArgs, common: &Common) -> Result<()> {
    let cfg = train_config(args.preset, args.config.as_deref(), &args.ablation, common.seed)?;
    let split = parse_split(&args.split)?;
    let inputs = load_inputs(&args.source, &args.target, &args.align, &split)?;
    let parts = split_by_time(&inputs.target, &split)?;
    let (teacher, _) = pretrain_teacher::<f64>(&inputs.source, &cfg)?;
    let state = train_mpkd(
        TrainInputs {
            source: &inputs.source,
            target: &parts.train,
            validation: parts.val.quadruples(),
            alignments: &inputs.alignments,
            train_steps: split.train_steps,
        },
        teacher,
        &cfg,
    )?;
    let target = &inputs.target;
    let added: Vec<Quadruple> = state.transferred.iter().map(|r| r.added).collect();
    let transferred = target.with_quadruples(added)?;
    let ck = Checkpoint::new(state.student.clone(), state.align.clone(), &cfg.digest(), cfg.seed);
    let mut out = OutDir::create(&common.out)?;
    out.write("checkpoint.mpkd", ck.payload())?;
    out.write("checkpoint.mpkd.json", ck.sidecar())?;
    out.write("log.tsv", state.log_tsv())?;
    out.write("config.ini", cfg.to_kv())?;
    out.write("entities.tsv", dump_vocab(target.entities()))?;
    out.write("relations.tsv", dump_vocab(target.relations()))?;
    out.write("transferred.tsv", dump_quadruples(&transferred))?;
    out.write("pseudo_audit.tsv", &state.audit)?;
    out.finish(json!({
        "command": "train",
        "seed": cfg.seed,
        "config": kv_json(&cfg.to_kv()),
        "config_digest": cfg.digest(),
        "split": [split.train_steps, split.val_steps, split.test_steps],
        "inputs": inputs.digests,
        "epochs_run": state.trace.len(),
        "best_epoch": state.best_epoch,
        "best_val_mrr": state.best_val_mrr,
        "pseudo_alignments": state.pseudo.len(),
        "transferred_events": state.transferred.len(),
    }))
}

pub fn eval(args: &EvalArgs, common: &Common) -> Result<()> {
    let dir = args.checkpoint.parent().unwrap_or(Path::new("."));
    let cfg = TrainConfig::parse(&read_file(&dir.join("config.ini"))?).context("reading the run config")?;
    let ck = Checkpoint::load(&args.checkpoint, Some(&cfg.digest()))
        .with_context(|| format!("loading {}", args.checkpoint.display()))?;
    let entities = parse_vocab(&read_file(&dir.join("entities.tsv"))?);
    let relations = parse_vocab(&read_file(&dir.join("relations.tsv"))?);
    if entities.len() != ck.meta.entities || relations.len() != ck.meta.relations {
        bail!(
            "vocabulary ({} entities, {} relations) does not match the checkpoint ({}, {})",
            entities.len(),
            relations.len(),
            ck.meta.entities,
            ck.meta.relations
        );
    }
    let split = parse_split(&args.split)?;
    let target = load_strict(&args.target, &entities, &relations, split.total_steps)?;
    let transferred = load_strict(&dir.join("transferred.tsv"), &entities, &relations, split.total_steps)?;
    let (test, history): (Vec<Quadruple>, TemporalKG) = match &args.test {
        Some(p) => {
            let test = load_strict(p, &entities, &relations, split.total_steps)?.quadruples().to_vec();
            let history = target.extended(transferred.quadruples().iter().chain(&test).copied())?.dedup();
            (test, history)
        }
        None => (
            split_by_time(&target, &split)?.test.quadruples().to_vec(),
            target.extended(transferred.quadruples().iter().copied())?,
        ),
    };
    if test.is_empty() {
        bail!("no test quadruples");
    }
    let report = evaluate(&ck.student, &history, &test, &encoder_config(&cfg), &cfg.digest(), cfg.seed)?;
    let mut out = OutDir::create(&common.out)?;
    out.write("metrics.json", report.to_json())?;
    if args.per_step {
        out.write("per_step.csv", report.per_step_csv())?;
    }
    out.finish(json!({
        "command": "eval",
        "checkpoint_sha256": ck.meta.payload_sha256,
        "config_digest": cfg.digest(),
        "test_queries": report.query_count,
    }))
}

pub fn experiment(args: &ExperimentArgs, common: &Common) -> Result<()> {
    if !EXPERIMENTS.contains(&args.name.as_str()) {
        bail!("unknown experiment '{}'; valid names: {}", args.name, EXPERIMENTS.join(", "));
    }
    let base = common.seed.unwrap_or(0);
    let seeds: Vec<u64> = (base..base + args.seeds).collect();
    let mut exp = ExperimentConfig::default();
    exp.train = train_config(Preset::Desk, args.config.as_deref(), &[], None)?;
    let mut out = OutDir::create(&common.out)?;
    let body = match args.name.as_str() {
        "noise" => {
            let ratios: Vec<f64> = parse_list(&args.ratios, "ratio")?;
            let variants: Vec<String> = parse_list(&args.variants, "variant")?;
            let names: Vec<&str> = variants.iter().map(String::as_str).collect();
            let rows = noise_sweep(&exp, &ratios, &names, &seeds)?;
            out.write("noise.csv", sweep_csv(&rows))?;
            let mut drops = String::from("x,variant,median_relative_drop\n");
            for (x, v, d) in relative_drops(&rows) {
                drops.push_str(&format!("{x},{v},{d:.6}\n"));
            }
            out.write("noise_drops.csv", drops)?;
            json!({ "ratios": ratios, "variants": variants })
        }
        "pseudo-ratio" => {
            let fractions: Vec<f64> = parse_list(&args.fractions, "fraction")?;
            let rows = pseudo_ratio_sweep(&exp, &fractions, &seeds, !args.no_references)?;
            out.write("pseudo_ratio.csv", sweep_csv(&rows))?;
            json!({ "fractions": fractions, "references": !args.no_references })
        }
        _ => {
            let negatives: Vec<usize> = parse_list(&args.negatives, "N")?;
            let sweep = nce_decay(&negatives)?;
            out.write("nce_decay.csv", nce_csv(&sweep))?;
            json!({
                "negatives": negatives,
                "slope": sweep.slope,
                "limit_estimate": sweep.limit_estimate,
                "limit_exact": sweep.limit_exact,
            })
        }
    };
    let mut body = body;
    body["command"] = json!("experiment");
    body["experiment"] = json!(args.name);
    body["seeds"] = json!(seeds);
    body["config"] = kv_json(&exp.train.to_kv());
    out.finish(body)
}
