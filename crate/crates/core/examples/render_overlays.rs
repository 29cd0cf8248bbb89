//! Tracks a generated sequence with the IoU baseline (no training needed) and
//! writes per-frame PNG overlays.
//!
//! `cargo run --example render_overlays -- [out_dir] [frames]`

use gnn_assoc::plot::write_overlays;
use gnn_assoc::scenario::{generate_sequence, ScenarioConfig};
use gnn_assoc::tracker::{SolverKind, Tracker, TrackerConfig};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().unwrap_or_else(|| "overlays".into());
    let length = args.next().map(|s| s.parse()).transpose()?.unwrap_or(30);
    let scenario = ScenarioConfig { length, ..Default::default() };
    let frames = generate_sequence(&scenario)?;
    let cfg = TrackerConfig {
        solver: SolverKind::HungarianIou,
        ..Default::default()
    };
    let tracks = Tracker::new(cfg, None)?.run(&frames)?;
    let n = write_overlays(&out, &frames, &tracks, scenario.arena, 480)?;
    println!("wrote {n} frames with {} track boxes to {out}", tracks.len());
    Ok(())
}
