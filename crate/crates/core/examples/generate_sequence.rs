//! Generates a synthetic sequence, writes it as JSON lines, and summarises it.
//!
//! `cargo run --example generate_sequence -- [out.jsonl] [seed]`

use std::collections::BTreeSet;

use gnn_assoc::scenario::{generate_sequence, read_sequence, write_sequence, ScenarioConfig};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().unwrap_or_else(|| "sequence.jsonl".into());
    let seed = args.next().map(|s| s.parse()).transpose()?.unwrap_or(7);
    let cfg = ScenarioConfig { seed, ..Default::default() };

    let frames = generate_sequence(&cfg)?;
    write_sequence(&out, &frames)?;
    assert_eq!(read_sequence(&out)?, frames);

    let ids: BTreeSet<u64> = frames.iter().flat_map(|f| f.gt.iter().map(|o| o.id)).collect();
    let dets: usize = frames.iter().map(|f| f.detections.len()).sum();
    let clutter: usize = frames
        .iter()
        .map(|f| f.detections.iter().filter(|d| d.clutter).count())
        .sum();
    let links: usize = frames.iter().map(|f| f.matches.len()).sum();
    println!("{} frames, {} identities, {dets} detections ({clutter} clutter), {links} frame-to-frame links", frames.len(), ids.len());
    println!("wrote {out}");
    Ok(())
}
