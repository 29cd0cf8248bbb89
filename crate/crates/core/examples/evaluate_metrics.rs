//! CLEAR-MOT and identity metrics on a two-object toy case where the tracker
//! swaps the identities halfway through.
//!
//! `cargo run --example evaluate_metrics`

use gnn_assoc::assoc::BoundingBox;
use gnn_assoc::metrics::{evaluate, GroundTruth, MetricsConfig};
use gnn_assoc::tracker::TrackRecord;

fn main() -> anyhow::Result<()> {
    let left = BoundingBox::new(0.1, 0.1, 0.1, 0.2)?;
    let right = BoundingBox::new(0.6, 0.1, 0.1, 0.2)?;
    let gt: GroundTruth = (0..4).map(|f| (f, vec![(1, left), (2, right)])).collect();

    let mut tracks = Vec::new();
    for frame in 0..4 {
        let (a, b) = if frame < 2 { (7, 8) } else { (8, 7) };
        tracks.push(TrackRecord { frame, id: a, bbox: left });
        tracks.push(TrackRecord { frame, id: b, bbox: right });
    }
    let report = evaluate(&tracks, &gt, &MetricsConfig::default())?;
    print!("{}", report.to_table());
    println!("expected MOTA 1 - 2/8 = {}", 1.0 - 2.0 / 8.0);
    Ok(())
}
