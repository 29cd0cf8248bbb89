//! The association losses on a hand-made 3×3 example.
//!
//! `cargo run --example losses`

use gnn_assoc::assoc::build_ground_truth;
use gnn_assoc::autodiff::{Tape, Tensor};
use gnn_assoc::loss::{assembled_loss, bd_loss, element_loss, evaluate, matrix_loss, o2o_loss, LossConfig};

fn main() -> anyhow::Result<()> {
    // Trajectory 0 continues as detection 1 and trajectory 1 as detection 2.
    // Trajectory 2 dies and detection 0 is born.
    let gt = build_ground_truth(&[(0, 1), (1, 2)], 3, 3)?;
    let y = Tensor::from_rows(&[[-2.0, 3.0, -1.0], [-1.5, -0.5, 2.5], [0.2, -3.0, -2.0]])?;
    let cfg = LossConfig::default();

    println!("ground truth {:?}", gt.entries().to_rows());
    println!("element  {:.6}", evaluate(&y, |t, v| element_loss(t, v, &gt, cfg.p))?);
    println!("o2o      {:.6}", evaluate(&y, |t, v| o2o_loss(t, v, &gt))?);
    println!("bd       {:.6}", evaluate(&y, |t, v| bd_loss(t, v, &gt))?);
    println!("matrix   {:.6}", evaluate(&y, |t, v| matrix_loss(t, v, &gt, &cfg))?);

    let mut tape = Tape::new();
    let vars = [y.clone(), y.map(|v| v * 0.5), y.map(|v| v - 1.0), y]
        .into_iter()
        .map(|m| tape.leaf(m))
        .collect::<Result<Vec<_>, _>>()?;
    let terms = assembled_loss(&mut tape, vars[0], vars[1], vars[2], vars[3], &gt, &cfg)?;
    println!("assembled {:?}", terms.values(&tape)?);

    let z = Tensor::zeros(1, 1);
    let unmatched = build_ground_truth(&[], 1, 1)?;
    let matched = build_ground_truth(&[(0, 0)], 1, 1)?;
    println!(
        "closed forms: element(0,0) = {:.12}, element(0,1) = {:.12}, bd = {:.12}",
        evaluate(&z, |t, v| element_loss(t, v, &unmatched, 25.0))?,
        evaluate(&z, |t, v| element_loss(t, v, &matched, 25.0))?,
        evaluate(&z, |t, v| bd_loss(t, v, &unmatched))?,
    );
    Ok(())
}
