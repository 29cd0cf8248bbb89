//! One round of bipartite message passing on a random problem, and a check
//! that relabeling trajectories and detections only relabels the output.
//!
//! `cargo run --example gnn_equivariance -- [seed]`

use gnn_assoc::assoc::{interpret_association, AssociationProblem};
use gnn_assoc::autodiff::{ParamStore, Tensor};
use gnn_assoc::config::ModelConfig;
use gnn_assoc::gnn::Gnn;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
    let data = (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor::matrix(r, c, data).expect("sizes agree")
}

fn main() -> anyhow::Result<()> {
    let seed = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(3);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = ModelConfig::default();
    let mut store = ParamStore::new();
    let gnn = Gnn::new(&mut store, &cfg, &mut rng)?;
    println!("message-passing parameters: {}", gnn.parameter_count(&store));

    let (rows, cols, d) = (4, 5, gnn.feature_dim());
    let s = random(&mut rng, rows, cols);
    let problem = AssociationProblem::new(
        s.clone(),
        s.clone(),
        s,
        random(&mut rng, rows, d),
        random(&mut rng, cols, d),
    )?;
    let x = gnn.gnn_forward(&store, &problem)?;
    println!("X =");
    for r in x.to_rows() {
        let cells: Vec<String> = r.iter().map(|v| format!("{v:+.4}")).collect();
        println!("  [{}]", cells.join(" "));
    }

    let mut p: Vec<usize> = (0..rows).collect();
    let mut q: Vec<usize> = (0..cols).collect();
    p.shuffle(&mut rng);
    q.shuffle(&mut rng);
    let px = gnn.gnn_forward(&store, &problem.permuted(&p, &q)?)?;
    println!("row order {p:?}, column order {q:?}");
    println!("X(PSQ) == P X Q exactly: {}", px == x.select(&p, &q));

    let a = interpret_association(&x)?;
    let b = interpret_association(&px)?;
    let mapped: Vec<(usize, usize)> = {
        let mut m: Vec<_> = b.matches.iter().map(|&(i, j)| (p[i], q[j])).collect();
        m.sort_unstable();
        m
    };
    println!("decisions agree after relabeling: {}", mapped == a.matches);
    Ok(())
}
