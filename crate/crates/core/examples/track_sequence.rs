//! Trains briefly, then tracks a held-out sequence with each association
//! strategy and scores the results.
//!
//! `cargo run --release --example track_sequence -- [iterations] [checkpoint]`

use gnn_assoc::ablation::test_sequences;
use gnn_assoc::config::RunConfig;
use gnn_assoc::metrics::{evaluate, ground_truth};
use gnn_assoc::model::{AssociationModel, Variant};
use gnn_assoc::scenario::training_set;
use gnn_assoc::tracker::{SolverKind, Tracker, TrackerConfig};
use gnn_assoc::train::train;

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let mut cfg = RunConfig::default();
    cfg.train.iterations = args.next().map(|s| s.parse()).transpose()?.unwrap_or(3000);
    let model = match args.next() {
        Some(path) => AssociationModel::load(path)?,
        None => {
            let data = training_set(&cfg.scenario, cfg.train.sequences, cfg.model.tracklet_len)?;
            let mut m = AssociationModel::new(cfg.model.clone(), Variant::Full)?;
            train(&mut m, &data, &cfg.train)?;
            m
        }
    };
    let frames = test_sequences(&cfg.scenario, 1)?.remove(0);
    let gt = ground_truth(&frames);
    let tc = TrackerConfig::default();
    println!(
        "birth window {} frames, death window {} frames",
        tc.birth_frames(),
        tc.death_frames()
    );
    println!("{:<20} {:>8} {:>6} {:>8}", "solver", "MOTA", "IDSW", "IDF1");
    for solver in [
        SolverKind::Learned,
        SolverKind::AffinityOnly,
        SolverKind::HungarianBaseline,
        SolverKind::HungarianIou,
        SolverKind::Oracle,
    ] {
        let mut tracker = Tracker::new(TrackerConfig { solver, ..tc.clone() }, Some(model.clone()))?;
        let tracks = tracker.run(&frames)?;
        let r = evaluate(&tracks, &gt, &cfg.metrics)?;
        println!("{:<20} {:>8.4} {:>6} {:>8.4}", format!("{solver:?}"), r.mota, r.id_switches, r.idf1);
    }
    Ok(())
}
