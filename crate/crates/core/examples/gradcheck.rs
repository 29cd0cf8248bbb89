//! Finite-difference gradient checks over every differentiable operation.
//!
//! `cargo run --release --example gradcheck -- [instances] [seed]`

use std::time::Instant;

use gnn_assoc::gradsuite::{format_table, run_suite};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let instances = args.next().map(|s| s.parse()).transpose()?.unwrap_or(20);
    let seed = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0);
    let start = Instant::now();
    let rows = run_suite(seed, instances)?;
    print!("{}", format_table(&rows));
    println!("{:.1}s", start.elapsed().as_secs_f64());
    if rows.iter().any(|r| !r.passed()) {
        std::process::exit(1);
    }
    Ok(())
}
