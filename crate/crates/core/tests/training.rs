//! Teacher pretraining, run determinism, ablation equivalence and checkpoint
//! round trips on small synthetic problems.

use tkdistill::checkpoint::Checkpoint;
use tkdistill::config::TrainConfig;
use tkdistill::eval::median;
use tkdistill::experiment::{run_variant, test_metrics, Prepared};
use tkdistill::trainer::pretrain_teacher;
use tkg::{Quadruple, SplitSpec, SynthConfig, TemporalKG, Vocab};

fn small_synth() -> SynthConfig {
    SynthConfig {
        source_entities: 30,
        target_entities: 30,
        relations: 4,
        split: SplitSpec::new(10, 6, 2, 2).unwrap(),
        events_per_step: 15,
        coverage: 0.2,
        target_ratio: 0.5,
        clusters: 4,
        ..SynthConfig::default()
    }
}

fn small_cfg(seed: u64) -> TrainConfig {
    TrainConfig {
        dim: 8,
        batch_size: 32,
        epochs: 4,
        teacher_epochs: 2,
        warmup_epochs: 1,
        neighbors: 4,
        alignment_negatives: 4,
        align_steps: 1,
        seed,
        ..TrainConfig::desk()
    }
}

fn ten_quads() -> TemporalKG {
    let quads = (0..10u32).map(|i| Quadruple::new(i as usize % 5, i as usize % 2, (i as usize + 1) % 5, i / 2)).collect();
    TemporalKG::new(Vocab::numbered("e", 5), Vocab::numbered("r", 2), quads, 5).unwrap()
}

#[test]
fn teacher_loss_decreases_after_one_epoch() {
    let drops: Vec<f64> = (0..5)
        .map(|seed| {
            let cfg = TrainConfig { learning_rate: 0.01, teacher_epochs: 2, dim: 16, dropout: 0.0, seed, ..TrainConfig::default() };
            let (_, losses) = pretrain_teacher::<f64>(&ten_quads(), &cfg).unwrap();
            losses[0] - losses[1]
        })
        .collect();
    assert!(median(&mut drops.clone()) > 0.0, "{drops:?}");
}

#[test]
fn teacher_is_deterministic() {
    let cfg = TrainConfig { teacher_epochs: 3, dim: 16, ..TrainConfig::default() };
    let (a, la) = pretrain_teacher::<f64>(&ten_quads(), &cfg).unwrap();
    let (b, lb) = pretrain_teacher::<f64>(&ten_quads(), &cfg).unwrap();
    assert_eq!(a.entity_emb.data(), b.entity_emb.data());
    assert_eq!(a.relation_emb.data(), b.relation_emb.data());
    assert_eq!(la, lb);
    let (c, _) = pretrain_teacher::<f64>(&ten_quads(), &TrainConfig { seed: 1, ..cfg }).unwrap();
    assert_ne!(a.entity_emb.data(), c.entity_emb.data());
}

#[test]
fn fraction_zero_matches_no_pseudo() {
    let data = Prepared::new(&small_synth(), 2).unwrap();
    let cfg = small_cfg(2);
    let (teacher, _) = pretrain_teacher::<f64>(&data.pair.source, &cfg).unwrap();
    let zero = TrainConfig { pseudo_fraction_fixed: Some(0.0), ..cfg.clone() };
    let none = TrainConfig { no_pseudo: true, ..cfg };
    let a = run_variant(&data, &teacher, &data.pair.alignments, &zero).unwrap();
    let b = run_variant(&data, &teacher, &data.pair.alignments, &none).unwrap();
    assert_eq!(a.state.student.entity_emb.data(), b.state.student.entity_emb.data());
    assert_eq!(a.state.log_tsv(), b.state.log_tsv());
    assert_eq!(a.test.mrr, b.test.mrr);
    assert!(a.state.pseudo.is_empty());
}

#[test]
fn checkpoint_round_trip_after_training() {
    let data = Prepared::new(&small_synth(), 3).unwrap();
    let cfg = small_cfg(3);
    let (teacher, _) = pretrain_teacher::<f64>(&data.pair.source, &cfg).unwrap();
    let run = run_variant(&data, &teacher, &data.pair.alignments, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (p1, p2) = (dir.path().join("a.mpkd"), dir.path().join("b.mpkd"));
    Checkpoint::new(run.state.student.clone(), run.state.align.clone(), &cfg.digest(), cfg.seed).save(&p1).unwrap();
    let loaded = Checkpoint::load(&p1, Some(&cfg.digest())).unwrap();
    loaded.save(&p2).unwrap();
    assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    assert_eq!(
        std::fs::read(Checkpoint::sidecar_path(&p1)).unwrap(),
        std::fs::read(Checkpoint::sidecar_path(&p2)).unwrap()
    );
    let graph = run.state.augmented(&data.target_train).unwrap();
    let again = test_metrics(&data, &loaded.student, &graph, &cfg).unwrap();
    assert!((again.mrr - run.test.mrr).abs() < 1e-3, "{} vs {}", again.mrr, run.test.mrr);
    assert!(Checkpoint::load(&p1, Some("other digest")).is_err());
}
