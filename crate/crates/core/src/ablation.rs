//! Side-by-side comparison of the full pipeline against the configuration
//! without the message-passing module and the one trained without assembled
//! supervision.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::assoc::interpret_association;
use crate::autodiff::Tensor;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::metrics::{evaluate, ground_truth, MetricsReport};
use crate::model::{AssociationModel, Variant};
use crate::scenario::{generate_sequence, to_training_problems, training_set, FrameRecord, ScenarioConfig, TrainingInstance};
use crate::solvers::greedy;
use crate::tracker::{SolverKind, Tracker};
use crate::train::{train, HistoryRow};

/// Offset between training and held-out sequence seeds.
pub const TEST_SEED_OFFSET: u64 = 1_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationConfig {
    pub run: RunConfig,
    pub test_sequences: usize,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            run: RunConfig::default(),
            test_sequences: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub name: String,
    pub metrics: MetricsReport,
    /// Cell-wise agreement of the interpreted output with the ground truth.
    pub edge_accuracy: f64,
    /// The same for greedy assignment on this model's `S`, keeping positive
    /// cells only.
    pub greedy_s_accuracy: f64,
    pub final_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn row(&self, name: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn to_table(&self) -> String {
        let mut s = format!(
            "{:<12} {:>8} {:>6} {:>8} {:>6} {:>6} {:>10} {:>10}\n",
            "config", "MOTA", "IDSW", "IDF1", "MT", "ML", "edge acc", "greedy(S)"
        );
        for r in &self.rows {
            let m = &r.metrics;
            let _ = writeln!(
                s,
                "{:<12} {:>8.4} {:>6} {:>8.4} {:>6.3} {:>6.3} {:>10.4} {:>10.4}",
                r.name,
                m.mota,
                m.id_switches,
                m.idf1,
                m.mostly_tracked,
                m.mostly_lost,
                r.edge_accuracy,
                r.greedy_s_accuracy
            );
        }
        s
    }
}

/// Fraction of cells where `decision` agrees with the ground truth.
pub fn edge_accuracy(decision: &Tensor, truth: &Tensor) -> f64 {
    let agree = decision
        .data()
        .iter()
        .zip(truth.data())
        .filter(|(a, b)| a == b)
        .count();
    agree as f64 / truth.len().max(1) as f64
}

/// Greedy assignment on `s`, keeping only strictly positive pairs.
pub fn greedy_positive(s: &Tensor) -> Result<Tensor> {
    let mut out = Tensor::zeros(s.rows(), s.cols());
    for (i, j) in greedy(s)?.pairs {
        if s.get(i, j) > 0.0 {
            out.set(i, j, 1.0);
        }
    }
    Ok(out)
}

/// Mean per-instance accuracies `(interpret(output), greedy(S))`.
pub fn association_accuracy(
    model: &AssociationModel,
    data: &[TrainingInstance],
) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Err(Error::invalid("no instances to score"));
    }
    let (mut out, mut base) = (0.0, 0.0);
    for inst in data {
        let (problem, x) = model.associate(&inst.tracks, &inst.detections)?;
        let (r, c) = (x.rows(), x.cols());
        let truth = inst.ground_truth.entries();
        out += edge_accuracy(&interpret_association(&x)?.indicator(r, c), truth);
        base += edge_accuracy(&greedy_positive(&problem.affinity)?, truth);
    }
    let n = data.len() as f64;
    Ok((out / n, base / n))
}

/// Trains a fresh model of `variant` on seeded sequences from `run`.
pub fn train_variant(
    run: &RunConfig,
    variant: Variant,
    data: &[TrainingInstance],
    assembled: bool,
) -> Result<(AssociationModel, Vec<HistoryRow>)> {
    let mut model = AssociationModel::new(run.model.clone(), variant)?;
    let mut cfg = run.train.clone();
    if !assembled {
        cfg.loss = cfg.loss.without_assembly();
    }
    let history = train(&mut model, data, &cfg)?;
    Ok((model, history))
}

/// Tracks every sequence with `model` and scores the concatenated result.
pub fn score_tracking(
    model: &AssociationModel,
    solver: SolverKind,
    run: &RunConfig,
    sequences: &[Vec<FrameRecord>],
) -> Result<MetricsReport> {
    let mut reports = Vec::with_capacity(sequences.len());
    for frames in sequences {
        let cfg = crate::tracker::TrackerConfig {
            solver,
            ..run.tracker.clone()
        };
        let mut tracker = Tracker::new(cfg, Some(model.clone()))?;
        let tracks = tracker.run(frames)?;
        reports.push(evaluate(&tracks, &ground_truth(frames), &run.metrics)?);
    }
    Ok(combine(&reports))
}

/// Pools per-sequence reports: counts add, averages are re-weighted.
pub fn combine(reports: &[MetricsReport]) -> MetricsReport {
    let mut out = MetricsReport::default();
    let (mut motp, mut idf1, mut idf1_w, mut mt, mut ml) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for r in reports {
        out.id_switches += r.id_switches;
        out.fragmentations += r.fragmentations;
        out.false_positives += r.false_positives;
        out.false_negatives += r.false_negatives;
        out.gt_count += r.gt_count;
        out.matches += r.matches;
        out.gt_tracks += r.gt_tracks;
        motp += r.motp * r.matches as f64;
        let w = (r.gt_count + r.matches + r.false_positives) as f64;
        idf1 += r.idf1 * w;
        idf1_w += w;
        mt += r.mostly_tracked * r.gt_tracks as f64;
        ml += r.mostly_lost * r.gt_tracks as f64;
    }
    let div = |a: f64, b: f64| if b == 0.0 { 0.0 } else { a / b };
    out.mota = 1.0
        - (out.false_negatives + out.false_positives + out.id_switches) as f64
            / out.gt_count.max(1) as f64;
    out.motp = div(motp, out.matches as f64);
    out.idf1 = div(idf1, idf1_w);
    out.mostly_tracked = div(mt, out.gt_tracks as f64);
    out.mostly_lost = div(ml, out.gt_tracks as f64);
    out
}

/// Held-out sequences: the scenario seeds shifted by [`TEST_SEED_OFFSET`].
pub fn test_sequences(scenario: &ScenarioConfig, count: usize) -> Result<Vec<Vec<FrameRecord>>> {
    (0..count)
        .map(|k| {
            generate_sequence(&ScenarioConfig {
                seed: scenario.seed.wrapping_add(TEST_SEED_OFFSET + k as u64),
                ..scenario.clone()
            })
        })
        .collect()
}

pub fn run_ablation(cfg: &AblationConfig) -> Result<AblationReport> {
    let run = &cfg.run;
    run.validate()?;
    let train_data = training_set(&run.scenario, run.train.sequences, run.model.tracklet_len)?;
    let tests = test_sequences(&run.scenario, cfg.test_sequences)?;
    let mut held_out = Vec::new();
    for frames in &tests {
        held_out.extend(to_training_problems(frames, run.model.tracklet_len)?.0);
    }

    let configs = [
        ("full", Variant::Full, true, SolverKind::Learned),
        ("no-gnn", Variant::NoGnn, true, SolverKind::AffinityOnly),
        ("no-assembly", Variant::Full, false, SolverKind::Learned),
    ];
    let mut rows = Vec::new();
    for (name, variant, assembled, solver) in configs {
        let (model, history) = train_variant(run, variant, &train_data, assembled)?;
        let metrics = score_tracking(&model, solver, run, &tests)?;
        let (edge, greedy_s) = association_accuracy(&model, &held_out)?;
        let tail = history.len().saturating_sub(100);
        let final_loss = history[tail..].iter().map(|h| h.loss.association).sum::<f64>()
            / (history.len() - tail).max(1) as f64;
        rows.push(AblationRow {
            name: name.to_string(),
            metrics,
            edge_accuracy: edge,
            greedy_s_accuracy: greedy_s,
            final_loss,
        });
    }
    Ok(AblationReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_counts_agreeing_cells() {
        let d = Tensor::from_rows(&[[1.0, 0.0], [0.0, 0.0]]).unwrap();
        let t = Tensor::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        assert_eq!(edge_accuracy(&d, &t), 0.75);
    }

    #[test]
    fn greedy_positive_drops_negative_pairs() {
        let s = Tensor::from_rows(&[[2.0, -1.0], [-3.0, -0.5]]).unwrap();
        let g = greedy_positive(&s).unwrap();
        assert_eq!(g.data(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn combine_pools_counts() {
        let a = MetricsReport {
            false_negatives: 2,
            gt_count: 10,
            matches: 8,
            gt_tracks: 2,
            mostly_tracked: 1.0,
            ..Default::default()
        };
        let b = MetricsReport {
            false_positives: 1,
            id_switches: 1,
            gt_count: 10,
            matches: 10,
            gt_tracks: 2,
            ..Default::default()
        };
        let c = combine(&[a, b]);
        assert_eq!(c.gt_count, 20);
        assert!((c.mota - (1.0 - 4.0 / 20.0)).abs() < 1e-15);
        assert_eq!(c.mostly_tracked, 0.5);
    }
}
