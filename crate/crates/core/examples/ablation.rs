//! Trains the full model, the model without message passing, and the model
//! without assembled supervision, then compares them on held-out sequences.
//!
//! `cargo run --release --example ablation -- [iterations]`

use gnn_assoc::ablation::{run_ablation, AblationConfig};

fn main() -> gnn_assoc::Result<()> {
    let mut cfg = AblationConfig::default();
    if let Some(n) = std::env::args().nth(1) {
        cfg.run.train.iterations = n.parse().expect("iterations must be an integer");
    }
    let started = std::time::Instant::now();
    let report = run_ablation(&cfg)?;
    print!("{}", report.to_table());
    println!("elapsed {:.1}s", started.elapsed().as_secs_f64());
    Ok(())
}
