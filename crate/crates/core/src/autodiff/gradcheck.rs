//! Central finite-difference verification of tape gradients.
//!
//! Each input (or parameter) tensor is scored by
//! `‖a − n‖ / max(‖a‖, ‖n‖, floor)` over its coordinates, `a` analytic and `n`
//! numeric. The worst single-coordinate error is kept for diagnostics.
//! Coordinates whose `±step` probes flip the sign of any ReLU input straddle a
//! kink; the central difference is meaningless there, so they are counted and
//! left out.

use super::{ParamStore, Tape, Tensor, Var};
use crate::error::Result;

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;
/// Floor of the relative-error denominator.
pub const DENOMINATOR_FLOOR: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub tensors: usize,
    pub coordinates: usize,
    /// Coordinates skipped because a probe crossed a ReLU kink.
    pub kinks: usize,
    /// Worst per-tensor relative error; this decides pass/fail.
    pub max_rel_error: f64,
    /// Worst single-coordinate relative error.
    pub max_coord_rel_error: f64,
    pub max_abs_error: f64,
    /// (tensor index, flat coordinate) of the worst coordinate.
    pub worst: Option<(usize, usize)>,
    pub tolerance: f64,
}

fn rel(diff: f64, a: f64, n: f64) -> f64 {
    diff / a.max(n).max(DENOMINATOR_FLOOR)
}

/// Accumulates one tensor's coordinates.
#[derive(Default)]
struct TensorScore {
    diff_sq: f64,
    analytic_sq: f64,
    numeric_sq: f64,
}

impl GradCheckReport {
    fn empty(tolerance: f64) -> Self {
        Self {
            tensors: 0,
            coordinates: 0,
            kinks: 0,
            max_rel_error: 0.0,
            max_coord_rel_error: 0.0,
            max_abs_error: 0.0,
            worst: None,
            tolerance,
        }
    }

    pub fn passed(&self) -> bool {
        self.coordinates > 0 && self.max_rel_error <= self.tolerance
    }

    fn record(&mut self, score: &mut TensorScore, at: (usize, usize), analytic: f64, numeric: f64) {
        let abs = (analytic - numeric).abs();
        self.coordinates += 1;
        self.max_abs_error = self.max_abs_error.max(abs);
        let r = rel(abs, analytic.abs(), numeric.abs());
        if r > self.max_coord_rel_error || self.worst.is_none() {
            self.max_coord_rel_error = self.max_coord_rel_error.max(r);
            self.worst = Some(at);
        }
        score.diff_sq += abs * abs;
        score.analytic_sq += analytic * analytic;
        score.numeric_sq += numeric * numeric;
    }

    fn finish_tensor(&mut self, score: TensorScore) {
        self.tensors += 1;
        let r = rel(score.diff_sq.sqrt(), score.analytic_sq.sqrt(), score.numeric_sq.sqrt());
        self.max_rel_error = self.max_rel_error.max(r);
    }

    /// Folds another report into this one.
    pub fn merge(&mut self, other: &GradCheckReport) {
        self.tensors += other.tensors;
        self.coordinates += other.coordinates;
        self.kinks += other.kinks;
        self.max_abs_error = self.max_abs_error.max(other.max_abs_error);
        self.max_rel_error = self.max_rel_error.max(other.max_rel_error);
        if other.max_coord_rel_error > self.max_coord_rel_error {
            self.max_coord_rel_error = other.max_coord_rel_error;
            self.worst = other.worst;
        }
    }
}

/// Scalar output and ReLU sign pattern of one evaluation.
fn probe(tape: &Tape, out: Var) -> Result<(f64, Vec<bool>)> {
    Ok((tape.value(out).item()?, tape.relu_pattern()))
}

/// Checks the gradient of a scalar function of `inputs`.
///
/// `f` must record its computation on the given tape starting from the leaf
/// variables it receives and return a scalar.
pub fn finite_diff_check<F>(
    f: F,
    inputs: &[Tensor],
    step: f64,
    tolerance: f64,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Tensor]| -> Result<(f64, Vec<bool>)> {
        let mut tape = Tape::new();
        let vars = values
            .iter()
            .map(|v| tape.leaf(v.clone()))
            .collect::<Result<Vec<_>>>()?;
        let out = f(&mut tape, &vars)?;
        probe(&tape, out)
    };

    let mut tape = Tape::new();
    let vars = inputs
        .iter()
        .map(|v| tape.leaf(v.clone()))
        .collect::<Result<Vec<_>>>()?;
    let out = f(&mut tape, &vars)?;
    let grads = tape.backward(out)?;
    let base = tape.relu_pattern();

    let mut report = GradCheckReport::empty(tolerance);
    let mut work = inputs.to_vec();
    for (k, var) in vars.iter().enumerate() {
        let analytic = grads
            .wrt(*var)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(inputs[k].rows(), inputs[k].cols()));
        let mut score = TensorScore::default();
        for c in 0..inputs[k].len() {
            let orig = work[k].data()[c];
            work[k].data_mut()[c] = orig + step;
            let (plus, pp) = eval(&work)?;
            work[k].data_mut()[c] = orig - step;
            let (minus, pm) = eval(&work)?;
            work[k].data_mut()[c] = orig;
            if pp != base || pm != base {
                report.kinks += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * step);
            report.record(&mut score, (k, c), analytic.data()[c], numeric);
        }
        report.finish_tensor(score);
    }
    Ok(report)
}

/// Checks the gradient of a scalar loss with respect to every parameter in
/// `store`. Existing gradients in the store are left untouched.
pub fn check_parameters<F>(
    store: &ParamStore,
    f: F,
    step: f64,
    tolerance: f64,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var>,
{
    let mut scratch = store.clone();
    scratch.zero_grad();
    let mut tape = Tape::new();
    let out = f(&mut tape, &scratch)?;
    tape.backward_into(out, &mut scratch)?;
    let base = tape.relu_pattern();
    let analytic: Vec<Tensor> = scratch.iter().map(|(_, p)| p.grad.clone()).collect();

    let eval = |s: &ParamStore| -> Result<(f64, Vec<bool>)> {
        let mut t = Tape::new();
        let o = f(&mut t, s)?;
        probe(&t, o)
    };

    let mut report = GradCheckReport::empty(tolerance);
    let ids: Vec<_> = scratch.iter().map(|(id, _)| id).collect();
    for (k, id) in ids.into_iter().enumerate() {
        let mut score = TensorScore::default();
        for c in 0..analytic[k].len() {
            let orig = scratch.get(id).value.data()[c];
            scratch.get_mut(id).value.data_mut()[c] = orig + step;
            let (plus, pp) = eval(&scratch)?;
            scratch.get_mut(id).value.data_mut()[c] = orig - step;
            let (minus, pm) = eval(&scratch)?;
            scratch.get_mut(id).value.data_mut()[c] = orig;
            if pp != base || pm != base {
                report.kinks += 1;
                continue;
            }
            report.record(&mut score, (k, c), analytic[k].data()[c], (plus - minus) / (2.0 * step));
        }
        report.finish_tensor(score);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detects_a_correct_gradient() {
        let x = Tensor::row_vector(&[0.3, -1.2, 2.0]);
        let report = finite_diff_check(
            |t, v| {
                let s = t.tanh(v[0])?;
                let q = t.square(s)?;
                t.sum(q)
            },
            &[x],
            DEFAULT_STEP,
            DEFAULT_TOLERANCE,
        )
        .unwrap();
        assert_eq!(report.coordinates, 3);
        assert_eq!(report.tensors, 1);
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn flags_a_wrong_gradient() {
        let mut r = GradCheckReport::empty(1e-4);
        let mut s = TensorScore::default();
        r.record(&mut s, (0, 0), 0.0, 1e-12);
        r.record(&mut s, (0, 1), 1.0, 1.1);
        r.finish_tensor(s);
        assert!(!r.passed());
        assert_eq!(r.worst, Some((0, 1)));
        assert!((r.max_coord_rel_error - 0.1 / 1.1).abs() < 1e-12);
    }

    #[test]
    fn relative_error_uses_floor() {
        let mut r = GradCheckReport::empty(1e-4);
        let mut s = TensorScore::default();
        r.record(&mut s, (0, 0), 0.0, 1e-12);
        r.finish_tensor(s);
        assert!(r.max_rel_error <= 1e-4);
        assert!(r.passed());
    }

    #[test]
    fn probes_across_a_relu_kink_are_skipped() {
        let x = Tensor::row_vector(&[0.0, 1.0]);
        let report = finite_diff_check(
            |t, v| {
                let r = t.relu(v[0])?;
                t.sum(r)
            },
            &[x],
            DEFAULT_STEP,
            DEFAULT_TOLERANCE,
        )
        .unwrap();
        assert_eq!(report.kinks, 1);
        assert_eq!(report.coordinates, 1);
        assert!(report.passed());
    }
}
