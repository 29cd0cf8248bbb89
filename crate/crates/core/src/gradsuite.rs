//! Finite-difference checks over every differentiable operation and the full
//! training composition, on seeded random instances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assoc::{build_ground_truth, BoundingBox, Detection, GroundTruthMatrix, TrackObservation, Tracklet};
use crate::autodiff::gradcheck::{DEFAULT_STEP, DEFAULT_TOLERANCE};
use crate::autodiff::{check_parameters, finite_diff_check, Axis, GradCheckReport, ParamStore, Tape, Tensor, Var};
use crate::config::ModelConfig;
use crate::error::Result;
use crate::gnn::Gnn;
use crate::loss::{assembled_loss, bd_loss, element_loss, matrix_loss, o2o_loss, LossConfig};
use crate::nn::{Linear, Lstm};

#[derive(Clone, Debug)]
pub struct SuiteRow {
    pub name: &'static str,
    pub instances: usize,
    pub report: GradCheckReport,
}

impl SuiteRow {
    pub fn passed(&self) -> bool {
        self.report.passed()
    }
}

fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.gen_range(-2.0..2.0)).collect();
    Tensor::matrix(rows, cols, data).expect("shape matches data")
}

/// Values bounded away from zero, for ops with a kink there.
fn away_from_zero(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    random(rng, rows, cols).map(|v| if v.abs() < 0.1 { v.signum() * 0.1 + v } else { v })
}

fn dim(rng: &mut ChaCha8Rng) -> usize {
    rng.gen_range(1..=4)
}

/// `Σ w ⊙ v` with fixed random weights, so every output entry matters
/// differently.
fn probe(tape: &mut Tape, v: Var, weights: &Tensor) -> Result<Var> {
    let p = tape.mul_const(v, weights.clone())?;
    tape.sum(p)
}

fn random_ground_truth(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> GroundTruthMatrix {
    let mut perm: Vec<usize> = (0..cols).collect();
    for k in (1..cols).rev() {
        perm.swap(k, rng.gen_range(0..=k));
    }
    let matches: Vec<(usize, usize)> = (0..rows.min(cols))
        .filter(|_| rng.gen_bool(0.7))
        .map(|i| (i, perm[i]))
        .collect();
    build_ground_truth(&matches, rows, cols).expect("valid partial matching")
}

/// Moves every parameter off its initial value. Zero-initialised biases
/// otherwise put ReLU units exactly on their kink for all-zero features.
pub fn jitter(store: &mut ParamStore, rng: &mut ChaCha8Rng) {
    let ids: Vec<_> = store.iter().map(|(id, _)| id).collect();
    for id in ids {
        for v in store.get_mut(id).value.data_mut() {
            *v += rng.gen_range(-0.1..0.1);
        }
    }
}

type OpCase = Box<dyn Fn(&mut ChaCha8Rng) -> Result<GradCheckReport>>;

fn unary(
    rng: &mut ChaCha8Rng,
    kinked: bool,
    op: impl Fn(&mut Tape, Var) -> Result<Var>,
) -> Result<GradCheckReport> {
    let (r, c) = (dim(rng), dim(rng));
    let x = if kinked { away_from_zero(rng, r, c) } else { random(rng, r, c) };
    let probe_shape = {
        let mut t = Tape::new();
        let v = t.constant(x.clone())?;
        let out = op(&mut t, v)?;
        let s = t.value(out);
        (s.rows(), s.cols())
    };
    let w = random(rng, probe_shape.0, probe_shape.1);
    finite_diff_check(
        |t, v| {
            let y = op(t, v[0])?;
            probe(t, y, &w)
        },
        &[x],
        DEFAULT_STEP,
        DEFAULT_TOLERANCE,
    )
}

fn binary(
    rng: &mut ChaCha8Rng,
    a: Tensor,
    b: Tensor,
    op: impl Fn(&mut Tape, Var, Var) -> Result<Var>,
) -> Result<GradCheckReport> {
    let shape = {
        let mut t = Tape::new();
        let (x, y) = (t.constant(a.clone())?, t.constant(b.clone())?);
        let out = op(&mut t, x, y)?;
        let s = t.value(out);
        (s.rows(), s.cols())
    };
    let w = random(rng, shape.0, shape.1);
    finite_diff_check(
        |t, v| {
            let y = op(t, v[0], v[1])?;
            probe(t, y, &w)
        },
        &[a, b],
        DEFAULT_STEP,
        DEFAULT_TOLERANCE,
    )
}

fn same_shape(rng: &mut ChaCha8Rng) -> (Tensor, Tensor) {
    let (r, c) = (dim(rng), dim(rng));
    (random(rng, r, c), random(rng, r, c))
}

fn loss_case(
    rng: &mut ChaCha8Rng,
    f: impl Fn(&mut Tape, Var, &GroundTruthMatrix) -> Result<Var>,
) -> Result<GradCheckReport> {
    let (r, c) = (dim(rng), dim(rng));
    let gt = random_ground_truth(rng, r, c);
    let y = random(rng, r, c);
    finite_diff_check(|t, v| f(t, v[0], &gt), &[y], DEFAULT_STEP, DEFAULT_TOLERANCE)
}

fn random_box(rng: &mut ChaCha8Rng) -> BoundingBox {
    BoundingBox::new(
        rng.gen_range(0.0..0.9),
        rng.gen_range(0.0..0.8),
        rng.gen_range(0.04..0.1),
        rng.gen_range(0.08..0.2),
    )
    .expect("positive size")
}

/// A random association instance sized for the given model config.
pub fn random_instance(
    rng: &mut ChaCha8Rng,
    cfg: &ModelConfig,
    rows: usize,
    cols: usize,
) -> Result<(Vec<TrackObservation>, Vec<Detection>, GroundTruthMatrix)> {
    let tracks = (0..rows)
        .map(|_| {
            let n = rng.gen_range(1..=cfg.tracklet_len);
            let history: Vec<BoundingBox> = (0..n).map(|_| random_box(rng)).collect();
            Ok(TrackObservation {
                tracklet: Tracklet::from_history(&history, cfg.tracklet_len)?,
                descriptor: (0..cfg.descriptor_dim).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let dets = (0..cols)
        .map(|_| Detection {
            bbox: random_box(rng),
            descriptor: (0..cfg.descriptor_dim).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        })
        .collect();
    Ok((tracks, dets, random_ground_truth(rng, rows, cols)))
}

fn cases() -> Vec<(&'static str, OpCase)> {
    let mut v: Vec<(&'static str, OpCase)> = Vec::new();
    v.push(("matmul", Box::new(|rng| {
        let (r, k, c) = (dim(rng), dim(rng), dim(rng));
        let (a, b) = (random(rng, r, k), random(rng, k, c));
        binary(rng, a, b, |t, x, y| t.matmul(x, y))
    })));
    v.push(("aggregate", Box::new(|rng| {
        let (r, k, c) = (dim(rng), dim(rng), dim(rng));
        let (a, b) = (random(rng, r, k), random(rng, k, c));
        binary(rng, a, b, |t, x, y| t.aggregate(x, y))
    })));
    v.push(("add", Box::new(|rng| {
        let (a, b) = same_shape(rng);
        binary(rng, a, b, |t, x, y| t.add(x, y))
    })));
    v.push(("add_row", Box::new(|rng| {
        let (r, c) = (dim(rng), dim(rng));
        let (a, b) = (random(rng, r, c), random(rng, 1, c));
        binary(rng, a, b, |t, x, y| t.add_row(x, y))
    })));
    v.push(("sub", Box::new(|rng| {
        let (a, b) = same_shape(rng);
        binary(rng, a, b, |t, x, y| t.sub(x, y))
    })));
    v.push(("mul", Box::new(|rng| {
        let (a, b) = same_shape(rng);
        binary(rng, a, b, |t, x, y| t.mul(x, y))
    })));
    v.push(("mul_const", Box::new(|rng| {
        let (r, c) = (dim(rng), dim(rng));
        let k = random(rng, r, c);
        let x = random(rng, r, c);
        let w = random(rng, r, c);
        finite_diff_check(
            |t, v| {
                let y = t.mul_const(v[0], k.clone())?;
                probe(t, y, &w)
            },
            &[x],
            DEFAULT_STEP,
            DEFAULT_TOLERANCE,
        )
    })));
    v.push(("scale", Box::new(|rng| unary(rng, false, |t, x| t.scale(x, -1.7)))));
    v.push(("relu", Box::new(|rng| unary(rng, true, |t, x| t.relu(x)))));
    v.push(("sigmoid", Box::new(|rng| unary(rng, false, |t, x| t.sigmoid(x)))));
    v.push(("tanh", Box::new(|rng| unary(rng, false, |t, x| t.tanh(x)))));
    v.push(("softplus", Box::new(|rng| unary(rng, false, |t, x| t.softplus(x)))));
    v.push(("square", Box::new(|rng| unary(rng, false, |t, x| t.square(x)))));
    v.push(("row_softmax", Box::new(|rng| unary(rng, false, |t, x| t.row_softmax(x)))));
    v.push(("row_log_softmax", Box::new(|rng| unary(rng, false, |t, x| t.row_log_softmax(x)))));
    v.push(("transpose", Box::new(|rng| unary(rng, false, |t, x| t.transpose(x)))));
    v.push(("concat_rows", Box::new(|rng| {
        let (r1, r2, c) = (dim(rng), dim(rng), dim(rng));
        let (a, b) = (random(rng, r1, c), random(rng, r2, c));
        binary(rng, a, b, |t, x, y| t.concat(x, y, Axis::Rows))
    })));
    v.push(("concat_cols", Box::new(|rng| {
        let (r, c1, c2) = (dim(rng), dim(rng), dim(rng));
        let (a, b) = (random(rng, r, c1), random(rng, r, c2));
        binary(rng, a, b, |t, x, y| t.concat(x, y, Axis::Cols))
    })));
    v.push(("slice_cols", Box::new(|rng| {
        let (r, c) = (dim(rng), dim(rng) + 1);
        let start = rng.gen_range(0..c);
        let len = rng.gen_range(1..=c - start);
        let x = random(rng, r, c);
        let w = random(rng, r, len);
        finite_diff_check(
            |t, v| {
                let y = t.slice_cols(v[0], start, len)?;
                probe(t, y, &w)
            },
            &[x],
            DEFAULT_STEP,
            DEFAULT_TOLERANCE,
        )
    })));
    v.push(("gather_rows", Box::new(|rng| {
        let (r, c) = (dim(rng), dim(rng));
        let idx: Vec<usize> = (0..rng.gen_range(1..=6)).map(|_| rng.gen_range(0..r)).collect();
        let x = random(rng, r, c);
        let w = random(rng, idx.len(), c);
        finite_diff_check(
            |t, v| {
                let y = t.gather_rows(v[0], &idx)?;
                probe(t, y, &w)
            },
            &[x],
            DEFAULT_STEP,
            DEFAULT_TOLERANCE,
        )
    })));
    v.push(("reshape", Box::new(|rng| {
        let (r, c) = (dim(rng), dim(rng));
        let x = random(rng, r, c);
        let w = random(rng, c, r);
        finite_diff_check(
            |t, v| {
                let y = t.reshape(v[0], c, r)?;
                probe(t, y, &w)
            },
            &[x],
            DEFAULT_STEP,
            DEFAULT_TOLERANCE,
        )
    })));
    v.push(("sum", Box::new(|rng| unary(rng, false, |t, x| t.sum(x)))));
    v.push(("linear", Box::new(|rng| {
        let (r, k, c) = (dim(rng), dim(rng), dim(rng));
        let x = random(rng, r, k);
        let wt = random(rng, k, c);
        let b = random(rng, 1, c);
        let w = random(rng, r, c);
        finite_diff_check(
            |t, v| {
                let y = t.linear(v[0], v[1], v[2])?;
                probe(t, y, &w)
            },
            &[x, wt, b],
            DEFAULT_STEP,
            DEFAULT_TOLERANCE,
        )
    })));
    v.push(("mlp_layer", Box::new(|rng| {
        let mut store = ParamStore::new();
        let (r, k, c) = (dim(rng), dim(rng), dim(rng));
        let layer = Linear::new(&mut store, "l", k, c, rng)?;
        let x = random(rng, r, k);
        let w = random(rng, r, c);
        check_parameters(
            &store,
            |t, s| {
                let xv = t.constant(x.clone())?;
                let y = layer.forward(t, s, xv)?;
                let y = t.tanh(y)?;
                probe(t, y, &w)
            },
            DEFAULT_STEP,
            DEFAULT_TOLERANCE,
        )
    })));
    v.push(("lstm", Box::new(|rng| {
        let mut store = ParamStore::new();
        let (batch, input, hidden) = (dim(rng), dim(rng), dim(rng));
        let lstm = Lstm::new(&mut store, "lstm", input, hidden, rng)?;
        let steps: Vec<Tensor> = (0..3).map(|_| random(rng, batch, input)).collect();
        let w = random(rng, batch, hidden);
        let mut report = check_parameters(
            &store,
            |t, s| {
                let xs = steps.iter().map(|x| t.constant(x.clone())).collect::<Result<Vec<_>>>()?;
                let h = lstm.forward(t, s, &xs)?;
                probe(t, h, &w)
            },
            DEFAULT_STEP,
            DEFAULT_TOLERANCE,
        )?;
        let inputs = finite_diff_check(
            |t, v| {
                let h = lstm.forward(t, &store, v)?;
                probe(t, h, &w)
            },
            &steps,
            DEFAULT_STEP,
            DEFAULT_TOLERANCE,
        )?;
        report.merge(&inputs);
        Ok(report)
    })));
    v.push(("element_loss", Box::new(|rng| loss_case(rng, |t, y, g| element_loss(t, y, g, 25.0)))));
    v.push(("o2o_loss", Box::new(|rng| loss_case(rng, o2o_loss))));
    v.push(("bd_loss", Box::new(|rng| loss_case(rng, bd_loss))));
    v.push(("matrix_loss", Box::new(|rng| {
        loss_case(rng, |t, y, g| matrix_loss(t, y, g, &LossConfig::default()))
    })));
    v.push(("assembled_loss", Box::new(|rng| {
        let (r, c) = (dim(rng), dim(rng));
        let gt = random_ground_truth(rng, r, c);
        let m: Vec<Tensor> = (0..4).map(|_| random(rng, r, c)).collect();
        let cfg = LossConfig::default();
        finite_diff_check(
            |t, v| Ok(assembled_loss(t, v[0], v[1], v[2], v[3], &gt, &cfg)?.total),
            &m,
            DEFAULT_STEP,
            DEFAULT_TOLERANCE,
        )
    })));
    v.push(("gnn_feature_update", Box::new(|rng| {
        let cfg = ModelConfig::tiny();
        let mut store = ParamStore::new();
        let gnn = Gnn::new(&mut store, &cfg, rng)?;
        let (r, c) = (dim(rng), dim(rng));
        let d = gnn.feature_dim();
        let inputs = vec![random(rng, r, c), away_from_zero(rng, r, d), away_from_zero(rng, c, d)];
        let (wm, wn) = (random(rng, r, cfg.gnn_dim), random(rng, c, cfg.gnn_dim));
        finite_diff_check(
            |t, v| {
                let (a, b) = gnn.feature_update(t, &store, v[0], v[1], v[2])?;
                let pa = probe(t, a, &wm)?;
                let pb = probe(t, b, &wn)?;
                t.add(pa, pb)
            },
            &inputs,
            DEFAULT_STEP,
            DEFAULT_TOLERANCE,
        )
    })));
    v.push(("gnn_relation_update", Box::new(|rng| {
        let cfg = ModelConfig::tiny();
        let mut store = ParamStore::new();
        let gnn = Gnn::new(&mut store, &cfg, rng)?;
        let (r, c) = (dim(rng), dim(rng));
        let inputs = vec![random(rng, r, cfg.gnn_dim), random(rng, c, cfg.gnn_dim)];
        let w = random(rng, r, c);
        let mut report = finite_diff_check(
            |t, v| {
                let x = gnn.relation_update(t, &store, v[0], v[1])?;
                probe(t, x, &w)
            },
            &inputs,
            DEFAULT_STEP,
            DEFAULT_TOLERANCE,
        )?;
        let (a, b) = (inputs[0].clone(), inputs[1].clone());
        let params = check_parameters(
            &store,
            |t, s| {
                let (av, bv) = (t.constant(a.clone())?, t.constant(b.clone())?);
                let x = gnn.relation_update(t, s, av, bv)?;
                probe(t, x, &w)
            },
            DEFAULT_STEP,
            DEFAULT_TOLERANCE,
        )?;
        report.merge(&params);
        Ok(report)
    })));
    v.push(("assembled_loss_through_model", Box::new(|rng| {
        let cfg = ModelConfig {
            init_seed: rng.gen(),
            ..ModelConfig::tiny()
        };
        let mut model = crate::model::AssociationModel::new(cfg.clone(), crate::model::Variant::Full)?;
        jitter(&mut model.store, rng);
        let (r, c) = (dim(rng), dim(rng));
        let (tracks, dets, gt) = random_instance(rng, &cfg, r, c)?;
        let loss = LossConfig::default();
        check_parameters(
            &model.store,
            |t, s| {
                let a = model.affinity.forward(t, s, &tracks, &dets)?;
                let x = model.gnn.forward(t, s, a.affinity, a.track_features, a.detection_features)?;
                Ok(assembled_loss(t, a.appearance, a.motion, a.affinity, x, &gt, &loss)?.total)
            },
            DEFAULT_STEP,
            DEFAULT_TOLERANCE,
        )
    })));
    v
}

/// Names of every case in the suite, in run order.
pub fn case_names() -> Vec<&'static str> {
    cases().into_iter().map(|(n, _)| n).collect()
}

/// Runs every case on `instances` seeded instances; instance `k` of every
/// case uses the generator seeded with `seed + k`.
pub fn run_suite(seed: u64, instances: usize) -> Result<Vec<SuiteRow>> {
    let mut rows = Vec::new();
    for (name, case) in cases() {
        let mut total: Option<GradCheckReport> = None;
        for k in 0..instances {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k as u64));
            let r = case(&mut rng)?;
            match &mut total {
                Some(t) => t.merge(&r),
                None => total = Some(r),
            }
        }
        if let Some(report) = total {
            rows.push(SuiteRow {
                name,
                instances,
                report,
            });
        }
    }
    Ok(rows)
}

pub fn format_table(rows: &[SuiteRow]) -> String {
    let mut s = format!(
        "{:<30} {:>9} {:>8} {:>6} {:>12} {:>12}  result\n",
        "operation", "instances", "coords", "kinks", "rel err", "coord err"
    );
    for r in rows {
        s.push_str(&format!(
            "{:<30} {:>9} {:>8} {:>6} {:>12.3e} {:>12.3e}  {}\n",
            r.name,
            r.instances,
            r.report.coordinates,
            r.report.kinks,
            r.report.max_rel_error,
            r.report.max_coord_rel_error,
            if r.passed() { "pass" } else { "FAIL" }
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_case_passes_on_a_few_instances() {
        let rows = run_suite(11, 2).unwrap();
        assert_eq!(rows.len(), case_names().len());
        for r in &rows {
            assert!(r.passed(), "{}: {:?}", r.name, r.report);
            assert!(r.report.coordinates > 0, "{}", r.name);
        }
    }
}
