//! Training loop: forward through both networks, assembled loss, AdamW steps
//! on a step-decay learning-rate schedule.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{AdamConfig, AdamState, Tape};
use crate::error::{Error, Result};
use crate::loss::{assembled_loss, matrix_loss, LossConfig, LossValues};
use crate::model::AssociationModel;
use crate::scenario::TrainingInstance;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub decay_factor: f64,
    pub decay_interval: usize,
    pub iterations: usize,
    pub weight_decay: f64,
    /// Global gradient-norm clip; `0` disables clipping.
    pub clip_norm: f64,
    pub loss: LossConfig,
    /// Sequence file to train on; generated from the scenario config if unset.
    pub data: Option<PathBuf>,
    /// Number of seeded sequences generated when `data` is unset.
    pub sequences: usize,
    pub checkpoint: Option<PathBuf>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            decay_factor: 10.0,
            decay_interval: 2000,
            iterations: 5000,
            weight_decay: 0.0005,
            clip_norm: 5.0,
            loss: LossConfig::default(),
            data: None,
            sequences: 32,
            checkpoint: None,
            seed: 7,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::invalid("train.learning_rate must be positive"));
        }
        if !(self.decay_factor.is_finite() && self.decay_factor > 0.0) {
            return Err(Error::invalid("train.decay_factor must be positive"));
        }
        if self.decay_interval == 0 {
            return Err(Error::invalid("train.decay_interval must be positive"));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::invalid("train.weight_decay must be non-negative"));
        }
        if !(self.clip_norm.is_finite() && self.clip_norm >= 0.0) {
            return Err(Error::invalid("train.clip_norm must be non-negative"));
        }
        if self.data.is_none() && self.sequences == 0 {
            return Err(Error::invalid("train.sequences must be positive without a data file"));
        }
        self.loss.validate()
    }
}

/// `lr₀ / factor^⌊iteration / interval⌋`.
pub fn lr_schedule(iteration: usize, cfg: &TrainConfig) -> f64 {
    let drops = (iteration / cfg.decay_interval) as i32;
    cfg.learning_rate / cfg.decay_factor.powi(drops)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub iteration: usize,
    pub lr: f64,
    pub loss: LossValues,
}

const HISTORY_HEADER: &str = "iteration,lr,loss_total,loss_A,loss_M,loss_S,loss_Y";

/// Runs `cfg.iterations` single-instance steps. Instances are visited in a
/// seeded shuffle, reshuffled after every pass.
pub fn train(
    model: &mut AssociationModel,
    data: &[TrainingInstance],
    cfg: &TrainConfig,
) -> Result<Vec<HistoryRow>> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("no training instances"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new(
        &model.store,
        AdamConfig {
            learning_rate: cfg.learning_rate,
            weight_decay: cfg.weight_decay,
            ..AdamConfig::default()
        },
    );
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(cfg.iterations);
    for iteration in 0..cfg.iterations {
        let pos = iteration % data.len();
        if pos == 0 {
            order.shuffle(&mut rng);
        }
        let inst = &data[order[pos]];
        let mut tape = Tape::new();
        let vars = model.forward(&mut tape, &inst.tracks, &inst.detections)?;
        let a = vars.affinity;
        let terms = assembled_loss(
            &mut tape,
            a.appearance,
            a.motion,
            a.affinity,
            vars.output,
            &inst.ground_truth,
            &cfg.loss,
        )?;
        let loss = terms.values(&tape)?;
        if !loss.total.is_finite() {
            return Err(Error::NonFiniteLoss {
                iteration,
                value: loss.total,
            });
        }
        tape.backward_into(terms.total, &mut model.store)?;
        if cfg.clip_norm > 0.0 {
            model.store.clip_grad_norm(cfg.clip_norm);
        }
        let lr = lr_schedule(iteration, cfg);
        adam.step_with_lr(&mut model.store, lr);
        history.push(HistoryRow {
            iteration,
            lr,
            loss,
        });
    }
    Ok(history)
}

/// Mean matrix loss of the model output over `data`.
pub fn mean_matrix_loss(
    model: &AssociationModel,
    data: &[TrainingInstance],
    cfg: &LossConfig,
) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::invalid("no instances to evaluate"));
    }
    let mut total = 0.0;
    for inst in data {
        let mut tape = Tape::new();
        let vars = model.forward(&mut tape, &inst.tracks, &inst.detections)?;
        let l = matrix_loss(&mut tape, vars.output, &inst.ground_truth, cfg)?;
        total += tape.value(l).item()?;
    }
    Ok(total / data.len() as f64)
}

pub fn write_history(path: impl AsRef<Path>, history: &[HistoryRow]) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    writeln!(out, "{HISTORY_HEADER}")?;
    for r in history {
        let l = r.loss;
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.iteration, r.lr, l.total, l.appearance, l.motion, l.affinity, l.association
        )?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_history(path: impl AsRef<Path>) -> Result<Vec<HistoryRow>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == HISTORY_HEADER => {}
        _ => return Err(err(1, format!("expected header {HISTORY_HEADER}"))),
    }
    let mut rows = Vec::new();
    for (n, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 7 {
            return Err(err(n + 1, format!("expected 7 fields, found {}", fields.len())));
        }
        let iteration = fields[0]
            .parse::<usize>()
            .map_err(|e| err(n + 1, format!("iteration: {e}")))?;
        let mut v = [0.0; 6];
        for (k, f) in fields[1..].iter().enumerate() {
            v[k] = f.parse::<f64>().map_err(|e| err(n + 1, e.to_string()))?;
        }
        rows.push(HistoryRow {
            iteration,
            lr: v[0],
            loss: LossValues {
                total: v[1],
                appearance: v[2],
                motion: v[3],
                affinity: v[4],
                association: v[5],
            },
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ModelConfig;
    use crate::model::Variant;
    use crate::scenario::{training_set, ScenarioConfig};

    #[test]
    fn schedule_steps_down_by_ten() {
        let cfg = TrainConfig {
            decay_interval: 10000,
            ..Default::default()
        };
        assert_eq!(lr_schedule(0, &cfg), 0.001);
        assert_eq!(lr_schedule(9999, &cfg), 0.001);
        assert!((lr_schedule(10000, &cfg) - 0.0001).abs() < 1e-18);
        assert!((lr_schedule(25000, &cfg) - 0.00001).abs() < 1e-18);
    }

    fn tiny_data() -> Vec<TrainingInstance> {
        let cfg = ScenarioConfig {
            length: 6,
            descriptor_dim: 4,
            ..Default::default()
        };
        training_set(&cfg, 1, 3).unwrap()
    }

    #[test]
    fn identical_seeds_give_identical_histories() {
        let data = tiny_data();
        let cfg = TrainConfig {
            iterations: 12,
            ..Default::default()
        };
        let run = || {
            let mut m = AssociationModel::new(ModelConfig::tiny(), Variant::Full).unwrap();
            train(&mut m, &data, &cfg).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn history_csv_round_trip() {
        let data = tiny_data();
        let cfg = TrainConfig {
            iterations: 5,
            ..Default::default()
        };
        let mut m = AssociationModel::new(ModelConfig::tiny(), Variant::Full).unwrap();
        let h = train(&mut m, &data, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("h.csv");
        write_history(&p, &h).unwrap();
        assert!(fs::read_to_string(&p).unwrap().starts_with(HISTORY_HEADER));
        assert_eq!(read_history(&p).unwrap(), h);
    }

    #[test]
    fn loss_goes_down_on_a_small_set() {
        let data: Vec<_> = tiny_data().into_iter().take(3).collect();
        let mut m = AssociationModel::new(ModelConfig::tiny(), Variant::Full).unwrap();
        let before = mean_matrix_loss(&m, &data, &LossConfig::default()).unwrap();
        let cfg = TrainConfig {
            iterations: 150,
            learning_rate: 0.01,
            ..Default::default()
        };
        train(&mut m, &data, &cfg).unwrap();
        let after = mean_matrix_loss(&m, &data, &LossConfig::default()).unwrap();
        assert!(after < before, "{after} !< {before}");
    }
}
