//! Multi-level matrix loss and assembled supervision.

use serde::{Deserialize, Serialize};

use crate::assoc::GroundTruthMatrix;
use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    /// Weight on positive cells of the element-wise term.
    pub p: f64,
    pub lambda_a: f64,
    pub lambda_m: f64,
    pub lambda_s: f64,
    pub lambda_y: f64,
    /// Also apply the one-to-one term to matched columns.
    pub o2o_columns: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            p: 25.0,
            lambda_a: 1.0,
            lambda_m: 1.0,
            lambda_s: 1.0,
            lambda_y: 1.0,
            o2o_columns: false,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p.is_finite() && self.p > 0.0) {
            return Err(Error::invalid("loss.p must be positive"));
        }
        for (name, v) in [
            ("lambda_a", self.lambda_a),
            ("lambda_m", self.lambda_m),
            ("lambda_s", self.lambda_s),
            ("lambda_y", self.lambda_y),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!("loss.{name} must be non-negative")));
            }
        }
        Ok(())
    }

    /// Matrix loss on `Y` only.
    pub fn without_assembly(&self) -> Self {
        Self {
            lambda_a: 0.0,
            lambda_m: 0.0,
            lambda_s: 0.0,
            ..self.clone()
        }
    }
}

fn check_shape(op: &'static str, tape: &Tape, y: Var, gt: &GroundTruthMatrix) -> Result<()> {
    let shape = tape.value(y).shape();
    if shape != [gt.rows(), gt.cols()] {
        return Err(Error::shape(
            op,
            format!(
                "logits are {:?} but ground truth is {}x{}",
                shape,
                gt.rows(),
                gt.cols()
            ),
        ));
    }
    Ok(())
}

/// `Σ p·ŷ·softplus(−y) + (1−ŷ)·softplus(y)`, the weighted binary
/// cross-entropy on logits.
pub fn element_loss(tape: &mut Tape, y: Var, gt: &GroundTruthMatrix, p: f64) -> Result<Var> {
    check_shape("element_loss", tape, y, gt)?;
    let pos = gt.entries().map(|t| p * t);
    let neg = gt.entries().map(|t| 1.0 - t);
    let flipped = tape.scale(y, -1.0)?;
    let miss = tape.softplus(flipped)?;
    let false_alarm = tape.softplus(y)?;
    let a = tape.mul_const(miss, pos)?;
    let b = tape.mul_const(false_alarm, neg)?;
    let total = tape.add(a, b)?;
    tape.sum(total)
}

fn row_cross_entropy(tape: &mut Tape, y: Var, pairs: &[(usize, usize)]) -> Result<Var> {
    if pairs.is_empty() {
        return tape.constant(Tensor::scalar(0.0));
    }
    let cols = tape.value(y).cols();
    let rows: Vec<usize> = pairs.iter().map(|&(i, _)| i).collect();
    let mut target = Tensor::zeros(pairs.len(), cols);
    for (r, &(_, j)) in pairs.iter().enumerate() {
        target.set(r, j, 1.0);
    }
    let picked = tape.gather_rows(y, &rows)?;
    let log_probs = tape.row_log_softmax(picked)?;
    let hit = tape.mul_const(log_probs, target)?;
    let s = tape.sum(hit)?;
    tape.scale(s, -1.0)
}

/// Cross-entropy of each matched row against its one-hot target.
pub fn o2o_loss(tape: &mut Tape, y: Var, gt: &GroundTruthMatrix) -> Result<Var> {
    check_shape("o2o_loss", tape, y, gt)?;
    row_cross_entropy(tape, y, gt.matches())
}

/// Column-wise counterpart of [`o2o_loss`].
pub fn o2o_column_loss(tape: &mut Tape, y: Var, gt: &GroundTruthMatrix) -> Result<Var> {
    check_shape("o2o_loss", tape, y, gt)?;
    let yt = tape.transpose(y)?;
    let swapped: Vec<(usize, usize)> = gt.matches().iter().map(|&(i, j)| (j, i)).collect();
    row_cross_entropy(tape, yt, &swapped)
}

/// Cells penalized by [`bd_loss`]: those lying in an unmatched row and an
/// unmatched column at once.
pub fn bd_mask(gt: &GroundTruthMatrix) -> Tensor {
    let mut mask = Tensor::zeros(gt.rows(), gt.cols());
    let births = gt.birth_cols();
    for i in gt.death_rows() {
        for &j in &births {
            mask.set(i, j, 1.0);
        }
    }
    mask
}

/// `Σ σ(y)²` over the birth/death cells.
pub fn bd_loss(tape: &mut Tape, y: Var, gt: &GroundTruthMatrix) -> Result<Var> {
    check_shape("bd_loss", tape, y, gt)?;
    let mask = bd_mask(gt);
    if mask.sum() == 0.0 {
        return tape.constant(Tensor::scalar(0.0));
    }
    let sig = tape.sigmoid(y)?;
    let sq = tape.square(sig)?;
    let masked = tape.mul_const(sq, mask)?;
    tape.sum(masked)
}

pub fn matrix_loss(tape: &mut Tape, y: Var, gt: &GroundTruthMatrix, cfg: &LossConfig) -> Result<Var> {
    let e = element_loss(tape, y, gt, cfg.p)?;
    let o = o2o_loss(tape, y, gt)?;
    let b = bd_loss(tape, y, gt)?;
    let mut total = tape.add(e, o)?;
    total = tape.add(total, b)?;
    if cfg.o2o_columns {
        let c = o2o_column_loss(tape, y, gt)?;
        total = tape.add(total, c)?;
    }
    Ok(total)
}

/// Handles to the assembled loss and its four terms (unweighted).
#[derive(Clone, Copy, Debug)]
pub struct LossTerms {
    pub total: Var,
    pub appearance: Var,
    pub motion: Var,
    pub affinity: Var,
    pub association: Var,
}

/// Scalar values read back from [`LossTerms`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossValues {
    pub total: f64,
    pub appearance: f64,
    pub motion: f64,
    pub affinity: f64,
    pub association: f64,
}

impl LossTerms {
    pub fn values(&self, tape: &Tape) -> Result<LossValues> {
        Ok(LossValues {
            total: tape.value(self.total).item()?,
            appearance: tape.value(self.appearance).item()?,
            motion: tape.value(self.motion).item()?,
            affinity: tape.value(self.affinity).item()?,
            association: tape.value(self.association).item()?,
        })
    }
}

/// `λ_A·ℓ(A) + λ_M·ℓ(M) + λ_S·ℓ(S) + λ_Y·matrix_loss(Y)`.
pub fn assembled_loss(
    tape: &mut Tape,
    a: Var,
    m: Var,
    s: Var,
    y: Var,
    gt: &GroundTruthMatrix,
    cfg: &LossConfig,
) -> Result<LossTerms> {
    let shape = tape.value(y).shape().to_vec();
    for v in [a, m, s] {
        if tape.value(v).shape() != shape.as_slice() {
            return Err(Error::shape(
                "assembled_loss",
                format!("{:?} differs from {:?}", tape.value(v).shape(), shape),
            ));
        }
    }
    let appearance = element_loss(tape, a, gt, cfg.p)?;
    let motion = element_loss(tape, m, gt, cfg.p)?;
    let affinity = element_loss(tape, s, gt, cfg.p)?;
    let association = matrix_loss(tape, y, gt, cfg)?;

    let mut total = tape.scale(association, cfg.lambda_y)?;
    for (term, w) in [
        (appearance, cfg.lambda_a),
        (motion, cfg.lambda_m),
        (affinity, cfg.lambda_s),
    ] {
        if w != 0.0 {
            let t = tape.scale(term, w)?;
            total = tape.add(total, t)?;
        }
    }
    Ok(LossTerms {
        total,
        appearance,
        motion,
        affinity,
        association,
    })
}

/// Evaluates a loss built by `f` on a constant logit matrix.
pub fn evaluate<F>(y: &Tensor, f: F) -> Result<f64>
where
    F: FnOnce(&mut Tape, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let v = tape.constant(y.clone())?;
    let out = f(&mut tape, v)?;
    tape.value(out).item()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assoc::build_ground_truth;
    use std::f64::consts::LN_2;

    fn gt(matches: &[(usize, usize)], r: usize, c: usize) -> GroundTruthMatrix {
        build_ground_truth(matches, r, c).unwrap()
    }

    fn m(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(rows).unwrap()
    }

    #[test]
    fn element_loss_examples() {
        let none = gt(&[], 1, 1);
        let one = gt(&[(0, 0)], 1, 1);
        let v = evaluate(&m(&[&[0.0]]), |t, y| element_loss(t, y, &none, 25.0)).unwrap();
        assert!((v - LN_2).abs() < 1e-12);
        let v = evaluate(&m(&[&[20.0]]), |t, y| element_loss(t, y, &one, 25.0)).unwrap();
        assert!(v < 1e-6);
        let v = evaluate(&m(&[&[0.0]]), |t, y| element_loss(t, y, &one, 25.0)).unwrap();
        assert!((v - 25.0 * LN_2).abs() < 1e-12);
    }

    #[test]
    fn o2o_examples() {
        let g = gt(&[(0, 0)], 1, 2);
        let v = evaluate(&m(&[&[10.0, -10.0]]), |t, y| o2o_loss(t, y, &g)).unwrap();
        assert!(v < 1e-8);
        let v = evaluate(&m(&[&[0.0, 0.0]]), |t, y| o2o_loss(t, y, &g)).unwrap();
        assert!((v - LN_2).abs() < 1e-12);
        let empty = gt(&[], 2, 2);
        let v = evaluate(&m(&[&[3.0, 1.0], &[0.0, 2.0]]), |t, y| o2o_loss(t, y, &empty)).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn bd_examples() {
        let g = gt(&[], 1, 1);
        let v = evaluate(&m(&[&[0.0]]), |t, y| bd_loss(t, y, &g)).unwrap();
        assert!((v - 0.25).abs() < 1e-15);
        let v = evaluate(&m(&[&[-40.0]]), |t, y| bd_loss(t, y, &g)).unwrap();
        assert!(v < 1e-30);
        let full = gt(&[(0, 1), (1, 0)], 2, 2);
        let v = evaluate(&m(&[&[5.0, 1.0], &[2.0, 3.0]]), |t, y| bd_loss(t, y, &full)).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn bd_skips_cells_in_matched_columns() {
        // Row 1 is a death row; column 0 is matched, column 1 is a birth.
        let g = gt(&[(0, 0)], 2, 2);
        let mask = bd_mask(&g);
        assert_eq!(mask.data(), &[0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn matrix_loss_is_sum_of_terms() {
        let g = gt(&[(0, 0)], 1, 2);
        let y = m(&[&[0.0, 0.0]]);
        let cfg = LossConfig::default();
        let total = evaluate(&y, |t, v| matrix_loss(t, v, &g, &cfg)).unwrap();
        let e = evaluate(&y, |t, v| element_loss(t, v, &g, cfg.p)).unwrap();
        let o = evaluate(&y, |t, v| o2o_loss(t, v, &g)).unwrap();
        let b = evaluate(&y, |t, v| bd_loss(t, v, &g)).unwrap();
        assert!((total - (e + o + b)).abs() < 1e-12);
        assert!((e - (25.0 * LN_2 + LN_2)).abs() < 1e-12);
    }

    #[test]
    fn assembly_without_lambdas_is_matrix_loss() {
        let g = gt(&[(1, 0)], 2, 3);
        let y = m(&[&[0.3, -1.0, 2.0], &[1.5, 0.2, -0.7]]);
        let cfg = LossConfig::default().without_assembly();
        let mut tape = Tape::new();
        let v = tape.constant(y.clone()).unwrap();
        let noise = tape.constant(Tensor::filled(2, 3, 9.0)).unwrap();
        let terms = assembled_loss(&mut tape, noise, noise, noise, v, &g, &cfg).unwrap();
        let direct = evaluate(&y, |t, v| matrix_loss(t, v, &g, &cfg)).unwrap();
        assert_eq!(tape.value(terms.total).item().unwrap(), direct);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let g = gt(&[], 2, 2);
        let err = evaluate(&Tensor::zeros(2, 3), |t, v| element_loss(t, v, &g, 25.0));
        assert!(matches!(err, Err(Error::Shape { .. })));
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros(2, 2)).unwrap();
        let b = tape.constant(Tensor::zeros(2, 1)).unwrap();
        let cfg = LossConfig::default();
        assert!(assembled_loss(&mut tape, a, b, a, a, &g, &cfg).is_err());
    }
}
