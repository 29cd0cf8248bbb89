use gnn_assoc::assoc::AssociationProblem;
use gnn_assoc::autodiff::{ParamStore, Tensor};
use gnn_assoc::config::ModelConfig;
use gnn_assoc::gnn::Gnn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
    Tensor::matrix(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// `relu(v · W)` for one row vector.
fn embed(v: &[f64], w: &Tensor) -> Vec<f64> {
    (0..w.cols())
        .map(|c| v.iter().enumerate().map(|(k, x)| x * w.get(k, c)).sum::<f64>().max(0.0))
        .collect()
}

fn setup(seed: u64) -> (Gnn, ParamStore, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let gnn = Gnn::new(&mut store, &ModelConfig::tiny(), &mut rng).unwrap();
    (gnn, store, rng)
}

#[test]
fn uniform_affinity_averages_the_other_side() {
    let (gnn, store, mut rng) = setup(5);
    let d = gnn.feature_dim();
    let w = store.get(gnn.embedding).value.clone();
    let (i, j) = (3, 4);
    let fm = random(&mut rng, i, d);
    let fnn = random(&mut rng, j, d);
    let (tm, tn) = gnn
        .feature_update_values(&store, &Tensor::filled(i, j, 0.7), &fm, &fnn)
        .unwrap();
    let mean = |t: &Tensor| -> Vec<f64> {
        (0..d).map(|c| (0..t.rows()).map(|r| t.get(r, c)).sum::<f64>() / t.rows() as f64).collect()
    };
    let want_m = embed(&mean(&fnn), &w);
    for r in 0..i {
        for (a, b) in tm.row(r).iter().zip(&want_m) {
            assert!((a - b).abs() < 1e-12);
        }
    }
    // Both sides update from the other side's input features.
    let want_n = embed(&mean(&fm), &w);
    for r in 0..j {
        for (a, b) in tn.row(r).iter().zip(&want_n) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn single_pair_output_shape_and_value() {
    let (gnn, store, mut rng) = setup(6);
    let d = gnn.feature_dim();
    for (i, j) in [(1, 1), (3, 5), (7, 2)] {
        let problem = AssociationProblem::new(
            random(&mut rng, i, j),
            random(&mut rng, i, j),
            random(&mut rng, i, j),
            random(&mut rng, i, d),
            random(&mut rng, j, d),
        )
        .unwrap();
        let x = gnn.gnn_forward(&store, &problem).unwrap();
        assert_eq!((x.rows(), x.cols()), (i, j));
        assert!(x.is_finite());
    }
}

#[test]
fn identical_nodes_get_identical_rows() {
    let (gnn, store, mut rng) = setup(8);
    let d = gnn.feature_dim();
    let row = random(&mut rng, 1, d);
    let fm = Tensor::from_rows(&[row.row(0), row.row(0)]).unwrap();
    let s = random(&mut rng, 1, 3);
    let affinity = Tensor::from_rows(&[s.row(0), s.row(0)]).unwrap();
    let problem = AssociationProblem::new(
        affinity.clone(),
        affinity.clone(),
        affinity,
        fm,
        random(&mut rng, 3, d),
    )
    .unwrap();
    let x = gnn.gnn_forward(&store, &problem).unwrap();
    assert_eq!(x.row(0), x.row(1));
}
