//! Trains the full model on generated sequences, reports held-out loss, and
//! checks that the saved checkpoint reloads to identical outputs.
//!
//! `cargo run --release --example train_model -- [iterations] [out_dir]`

use std::path::PathBuf;

use gnn_assoc::ablation::test_sequences;
use gnn_assoc::config::RunConfig;
use gnn_assoc::model::{AssociationModel, Variant};
use gnn_assoc::plot::write_loss_curve;
use gnn_assoc::scenario::{to_training_problems, training_set};
use gnn_assoc::train::{mean_matrix_loss, train, write_history};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let mut cfg = RunConfig::default();
    if let Some(n) = args.next() {
        cfg.train.iterations = n.parse()?;
    }
    let out = PathBuf::from(args.next().unwrap_or_else(|| "train_out".into()));
    std::fs::create_dir_all(&out)?;

    let data = training_set(&cfg.scenario, cfg.train.sequences, cfg.model.tracklet_len)?;
    let mut held_out = Vec::new();
    for frames in test_sequences(&cfg.scenario, 2)? {
        held_out.extend(to_training_problems(&frames, cfg.model.tracklet_len)?.0);
    }
    let mut model = AssociationModel::new(cfg.model.clone(), Variant::Full)?;
    let before = mean_matrix_loss(&model, &held_out, &cfg.train.loss)?;
    let started = std::time::Instant::now();
    let history = train(&mut model, &data, &cfg.train)?;
    let after = mean_matrix_loss(&model, &held_out, &cfg.train.loss)?;
    println!(
        "{} instances, {} iterations in {:.1}s",
        data.len(),
        history.len(),
        started.elapsed().as_secs_f64()
    );
    println!("held-out matrix loss {before:.4} -> {after:.4}");

    let ckpt = out.join("model.ckpt");
    model.save(&ckpt)?;
    write_history(out.join("history.csv"), &history)?;
    write_loss_curve(out.join("loss.png"), &history)?;
    let reloaded = AssociationModel::load(&ckpt)?;
    let inst = &held_out[0];
    let same = model.associate(&inst.tracks, &inst.detections)?.1
        == reloaded.associate(&inst.tracks, &inst.detections)?.1;
    println!("checkpoint reload is bit-exact: {same}");
    println!("wrote {}", out.display());
    Ok(())
}
