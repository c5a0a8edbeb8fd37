//! Training configuration: defaults, `key = value` files and a digest of the
//! canonical form.

use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Every knob of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub dim: usize,
    pub margin_reasoning: f64,
    pub margin_alignment: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub teacher_epochs: usize,
    pub neighbors: usize,
    pub layers: usize,
    pub dropout: f64,
    pub reasoning_negatives: usize,
    pub alignment_negatives: usize,
    pub time_intervals: usize,
    pub warmup_epochs: usize,
    pub pseudo_fraction_start: f64,
    pub pseudo_fraction_end: f64,
    /// Overrides the schedule with a constant fraction when set.
    pub pseudo_fraction_fixed: Option<f64>,
    pub patience: usize,
    /// Adam steps on the alignment transforms per epoch.
    pub align_steps: usize,
    pub align_init_noise: f64,
    pub min_similarity: f64,
    pub exact_solver_cap: usize,
    pub replace_existing: bool,
    /// Student top-1 completion waits for the warmup epochs when set.
    pub transfer_after_warmup: bool,
    /// Runs event transfer after the student update instead of before it.
    pub transfer_after_student: bool,
    /// Copies teacher rows into ground-truth aligned student entities.
    pub warm_start_aligned: bool,
    pub seed: u64,
    pub uniform_strength: bool,
    pub pure_training: bool,
    pub no_pseudo: bool,
    pub no_event_transfer: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            dim: 128,
            margin_reasoning: 0.5,
            margin_alignment: 0.5,
            learning_rate: 0.001,
            batch_size: 256,
            epochs: 50,
            teacher_epochs: 50,
            neighbors: 8,
            layers: 1,
            dropout: 0.5,
            reasoning_negatives: 10,
            alignment_negatives: 50,
            time_intervals: 4,
            warmup_epochs: 10,
            pseudo_fraction_start: 0.10,
            pseudo_fraction_end: 0.40,
            pseudo_fraction_fixed: None,
            patience: 5,
            align_steps: 5,
            align_init_noise: 0.01,
            min_similarity: 0.0,
            exact_solver_cap: 256,
            replace_existing: true,
            transfer_after_warmup: true,
            transfer_after_student: false,
            warm_start_aligned: false,
            seed: 0,
            uniform_strength: false,
            pure_training: false,
            no_pseudo: false,
            no_event_transfer: false,
        }
    }
}

/// Ablation switches accepted by name.
pub const ABLATIONS: [&str; 4] = ["uniform_strength", "pure_training", "no_pseudo", "no_event_transfer"];

impl TrainConfig {
    /// Reduced sizes that fit the synthetic benchmark on a single core.
    /// Settings sized for a single CPU core on the 200-entity synthetic pair.
    pub fn desk() -> Self {
        Self {
            dim: 64,
            learning_rate: 0.01,
            batch_size: 512,
            epochs: 24,
            teacher_epochs: 30,
            neighbors: 32,
            dropout: 0.0,
            alignment_negatives: 10,
            warmup_epochs: 8,
            align_steps: 2,
            warm_start_aligned: true,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.dim == 0 || self.batch_size == 0 || self.time_intervals == 0 {
            return bad("dim, batch_size and time_intervals must be positive");
        }
        if self.reasoning_negatives == 0 || self.alignment_negatives == 0 {
            return bad("negative factors must be positive");
        }
        if self.margin_reasoning <= 0.0 || self.margin_alignment <= 0.0 {
            return bad("margins must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        let frac = |x: f64| (0.0..=1.0).contains(&x);
        if !frac(self.pseudo_fraction_start) || !frac(self.pseudo_fraction_end) || !self.pseudo_fraction_fixed.map_or(true, frac) {
            return bad("pseudo fractions must lie in [0, 1]");
        }
        if self.exact_solver_cap == 0 {
            return bad("exact_solver_cap must be at least 1");
        }
        Ok(())
    }

    /// Turns on one ablation switch by name.
    pub fn set_ablation(&mut self, name: &str) -> Result<()> {
        match name {
            "uniform_strength" => self.uniform_strength = true,
            "pure_training" => self.pure_training = true,
            "no_pseudo" => self.no_pseudo = true,
            "no_event_transfer" => self.no_event_transfer = true,
            _ => {
                return Err(Error::Config(format!(
                    "unknown ablation '{name}', expected one of {}",
                    ABLATIONS.join(", ")
                )))
            }
        }
        Ok(())
    }

    /// Whether pseudo alignments are ever generated.
    pub fn generates_pseudo(&self) -> bool {
        !(self.pure_training || self.no_pseudo || self.pseudo_fraction_fixed == Some(0.0))
    }

    /// Pseudo fraction used at `epoch`, or `None` before generation starts.
    pub fn pseudo_fraction(&self, epoch: usize) -> Option<f64> {
        if epoch < self.warmup_epochs {
            return None;
        }
        if let Some(f) = self.pseudo_fraction_fixed {
            return Some(f);
        }
        let rounds = self.epochs.saturating_sub(self.warmup_epochs);
        if rounds <= 1 {
            return Some(self.pseudo_fraction_start);
        }
        let k = (epoch - self.warmup_epochs).min(rounds - 1) as f64 / (rounds - 1) as f64;
        Some(self.pseudo_fraction_start + k * (self.pseudo_fraction_end - self.pseudo_fraction_start))
    }

    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn p<V: std::str::FromStr>(key: &str, v: &str) -> Result<V> {
            v.parse().map_err(|_| Error::Config(format!("bad value '{v}' for {key}")))
        }
        match key {
            "dim" => self.dim = p(key, value)?,
            "margin_reasoning" => self.margin_reasoning = p(key, value)?,
            "margin_alignment" => self.margin_alignment = p(key, value)?,
            "learning_rate" => self.learning_rate = p(key, value)?,
            "batch_size" => self.batch_size = p(key, value)?,
            "epochs" => self.epochs = p(key, value)?,
            "teacher_epochs" => self.teacher_epochs = p(key, value)?,
            "neighbors" => self.neighbors = p(key, value)?,
            "layers" => self.layers = p(key, value)?,
            "dropout" => self.dropout = p(key, value)?,
            "reasoning_negatives" => self.reasoning_negatives = p(key, value)?,
            "alignment_negatives" => self.alignment_negatives = p(key, value)?,
            "time_intervals" => self.time_intervals = p(key, value)?,
            "warmup_epochs" => self.warmup_epochs = p(key, value)?,
            "pseudo_fraction_start" => self.pseudo_fraction_start = p(key, value)?,
            "pseudo_fraction_end" => self.pseudo_fraction_end = p(key, value)?,
            "pseudo_fraction_fixed" => {
                self.pseudo_fraction_fixed = if value == "none" { None } else { Some(p(key, value)?) }
            }
            "patience" => self.patience = p(key, value)?,
            "align_steps" => self.align_steps = p(key, value)?,
            "align_init_noise" => self.align_init_noise = p(key, value)?,
            "min_similarity" => self.min_similarity = p(key, value)?,
            "exact_solver_cap" => self.exact_solver_cap = p(key, value)?,
            "replace_existing" => self.replace_existing = p(key, value)?,
            "transfer_after_warmup" => self.transfer_after_warmup = p(key, value)?,
            "transfer_after_student" => self.transfer_after_student = p(key, value)?,
            "warm_start_aligned" => self.warm_start_aligned = p(key, value)?,
            "seed" => self.seed = p(key, value)?,
            "uniform_strength" => self.uniform_strength = p(key, value)?,
            "pure_training" => self.pure_training = p(key, value)?,
            "no_pseudo" => self.no_pseudo = p(key, value)?,
            "no_event_transfer" => self.no_event_transfer = p(key, value)?,
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines over the defaults; `#` starts a comment line.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply(text)?;
        Ok(cfg)
    }

    /// Applies `key = value` lines on top of `self`.
    pub fn apply(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value'", i + 1)))?;
            self.set(k.trim(), v.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
        }
        self.validate()
    }

    /// Canonical `key = value` text with every field in a fixed order.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let mut w = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        w("dim", self.dim.to_string());
        w("margin_reasoning", self.margin_reasoning.to_string());
        w("margin_alignment", self.margin_alignment.to_string());
        w("learning_rate", self.learning_rate.to_string());
        w("batch_size", self.batch_size.to_string());
        w("epochs", self.epochs.to_string());
        w("teacher_epochs", self.teacher_epochs.to_string());
        w("neighbors", self.neighbors.to_string());
        w("layers", self.layers.to_string());
        w("dropout", self.dropout.to_string());
        w("reasoning_negatives", self.reasoning_negatives.to_string());
        w("alignment_negatives", self.alignment_negatives.to_string());
        w("time_intervals", self.time_intervals.to_string());
        w("warmup_epochs", self.warmup_epochs.to_string());
        w("pseudo_fraction_start", self.pseudo_fraction_start.to_string());
        w("pseudo_fraction_end", self.pseudo_fraction_end.to_string());
        w(
            "pseudo_fraction_fixed",
            self.pseudo_fraction_fixed.map_or("none".to_string(), |f| f.to_string()),
        );
        w("patience", self.patience.to_string());
        w("align_steps", self.align_steps.to_string());
        w("align_init_noise", self.align_init_noise.to_string());
        w("min_similarity", self.min_similarity.to_string());
        w("exact_solver_cap", self.exact_solver_cap.to_string());
        w("replace_existing", self.replace_existing.to_string());
        w("transfer_after_warmup", self.transfer_after_warmup.to_string());
        w("transfer_after_student", self.transfer_after_student.to_string());
        w("warm_start_aligned", self.warm_start_aligned.to_string());
        w("seed", self.seed.to_string());
        w("uniform_strength", self.uniform_strength.to_string());
        w("pure_training", self.pure_training.to_string());
        w("no_pseudo", self.no_pseudo.to_string());
        w("no_event_transfer", self.no_event_transfer.to_string());
        s
    }

    /// Hex SHA-256 of [`TrainConfig::to_kv`].
    pub fn digest(&self) -> String {
        Sha256::digest(self.to_kv().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}
