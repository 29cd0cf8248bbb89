//! Classical assignment solvers side by side on one random affinity matrix,
//! plus the thresholded birth/death variant.
//!
//! `cargo run --example solve_oracles -- [rows] [cols] [seed]`

use gnn_assoc::autodiff::Tensor;
use gnn_assoc::solvers::{brute_force, greedy, hungarian, solve_with_birth_death};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> anyhow::Result<()> {
    let args: Vec<u64> = std::env::args()
        .skip(1)
        .map(|a| a.parse())
        .collect::<Result<_, _>>()?;
    let rows = *args.first().unwrap_or(&4) as usize;
    let cols = *args.get(1).unwrap_or(&5) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(*args.get(2).unwrap_or(&7));

    let data = (0..rows * cols).map(|_| rng.gen_range(0.0..1.0)).collect();
    let s = Tensor::matrix(rows, cols, data)?;
    for r in s.to_rows() {
        let cells: Vec<String> = r.iter().map(|v| format!("{v:.3}")).collect();
        println!("  [{}]", cells.join(" "));
    }

    let h = hungarian(&s)?;
    println!("hungarian   {:?}  objective {:.6}", h.pairs, h.objective);
    if rows.min(cols) <= gnn_assoc::solvers::BRUTE_FORCE_CAP {
        let b = brute_force(&s)?;
        println!("brute force {:?}  objective {:.6}", b.pairs, b.objective);
    }
    let g = greedy(&s)?;
    println!("greedy      {:?}  objective {:.6}", g.pairs, g.objective);

    for threshold in [0.3, 0.6] {
        let r = solve_with_birth_death(&s, threshold)?;
        println!(
            "threshold {threshold}: matches {:?} births {:?} deaths {:?}",
            r.matches, r.births, r.deaths
        );
    }
    Ok(())
}
