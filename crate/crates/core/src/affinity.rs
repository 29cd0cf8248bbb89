//! Two-stream affinity network.
//!
//! Motion: an LSTM over each trajectory's tracklet and a fully connected
//! encoder for each detection box. Appearance: one shared encoder applied to
//! descriptor vectors on both sides. Three learned metric heads turn feature
//! pairs into the appearance affinity `A`, the motion affinity `M`, and their
//! fusion `S`.

use rand::Rng;

use crate::assoc::{AssociationProblem, BoundingBox, Detection, TrackObservation, Tracklet};
use crate::autodiff::{Axis, ParamStore, Tape, Tensor, Var};
use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::nn::{Lstm, Mlp};

#[derive(Clone, Debug)]
pub struct MotionEncoder {
    pub lstm: Lstm,
    pub box_encoder: Mlp,
}

#[derive(Clone, Debug)]
pub struct AppearanceEncoder {
    pub encoder: Mlp,
}

#[derive(Clone, Debug)]
pub struct MetricHeads {
    pub appearance: Mlp,
    pub motion: Mlp,
    pub fusion: Mlp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Head {
    Appearance,
    Motion,
}

#[derive(Clone, Debug)]
pub struct AffinityNet {
    pub motion: MotionEncoder,
    pub appearance: AppearanceEncoder,
    pub heads: MetricHeads,
    tracklet_len: usize,
    descriptor_dim: usize,
    arena: [f64; 2],
}

/// Tape handles for one association problem.
#[derive(Clone, Copy, Debug)]
pub struct AffinityVars {
    pub appearance: Var,
    pub motion: Var,
    pub affinity: Var,
    pub track_features: Var,
    pub detection_features: Var,
}

/// All `(i, j)` pairs in row-major order, as two parallel index lists.
pub(crate) fn pair_indices(rows: usize, cols: usize) -> (Vec<usize>, Vec<usize>) {
    let mut ii = Vec::with_capacity(rows * cols);
    let mut jj = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            ii.push(i);
            jj.push(j);
        }
    }
    (ii, jj)
}

impl AffinityNet {
    pub fn new<R: Rng>(store: &mut ParamStore, cfg: &ModelConfig, rng: &mut R) -> Result<Self> {
        let (dm, da, hid) = (cfg.motion_dim, cfg.appearance_dim, cfg.encoder_hidden);
        let motion = MotionEncoder {
            lstm: Lstm::new(store, "affinity.motion.lstm", 4, dm, rng)?,
            box_encoder: Mlp::new(store, "affinity.motion.box", &[4, hid, dm], rng)?,
        };
        let appearance = AppearanceEncoder {
            encoder: Mlp::new(
                store,
                "affinity.appearance",
                &[cfg.descriptor_dim, hid, da],
                rng,
            )?,
        };
        let hh = cfg.head_hidden;
        let heads = MetricHeads {
            appearance: Mlp::new(store, "affinity.head.appearance", &[2 * da, hh, 1], rng)?,
            motion: Mlp::new(store, "affinity.head.motion", &[2 * dm, hh, 1], rng)?,
            fusion: Mlp::new(store, "affinity.head.fusion", &[2, hh, 1], rng)?,
        };
        Ok(Self {
            motion,
            appearance,
            heads,
            tracklet_len: cfg.tracklet_len,
            descriptor_dim: cfg.descriptor_dim,
            arena: cfg.arena,
        })
    }

    pub fn tracklet_len(&self) -> usize {
        self.tracklet_len
    }

    pub fn descriptor_dim(&self) -> usize {
        self.descriptor_dim
    }

    /// Node feature width `D = D_A + D_M`.
    pub fn feature_dim(&self) -> usize {
        self.appearance.encoder.output() + self.motion.lstm.hidden
    }

    fn box_row(&self, b: &BoundingBox) -> [f64; 4] {
        b.normalized(self.arena[0], self.arena[1])
    }

    fn check_descriptor(&self, d: &[f64]) -> Result<()> {
        if d.len() != self.descriptor_dim {
            return Err(Error::invalid(format!(
                "descriptor has length {}, expected {}",
                d.len(),
                self.descriptor_dim
            )));
        }
        if d.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("descriptor is not finite"));
        }
        Ok(())
    }

    fn check_tracklet(&self, t: &Tracklet) -> Result<()> {
        if t.len() != self.tracklet_len {
            return Err(Error::invalid(format!(
                "tracklet has {} boxes, expected {}",
                t.len(),
                self.tracklet_len
            )));
        }
        Ok(())
    }

    /// LSTM motion features for a batch of tracklets, `batch × D_M`.
    pub fn motion_features(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        tracklets: &[&Tracklet],
    ) -> Result<Var> {
        for t in tracklets {
            self.check_tracklet(t)?;
        }
        let steps = (0..self.tracklet_len)
            .map(|step| {
                let rows: Vec<[f64; 4]> = tracklets
                    .iter()
                    .map(|t| self.box_row(&t.boxes()[step]))
                    .collect();
                tape.constant(Tensor::from_rows(&rows)?)
            })
            .collect::<Result<Vec<_>>>()?;
        self.motion.lstm.forward(tape, store, &steps)
    }

    /// Box-encoder motion features for detections, `batch × D_M`.
    pub fn box_features(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        boxes: &[BoundingBox],
    ) -> Result<Var> {
        let rows: Vec<[f64; 4]> = boxes.iter().map(|b| self.box_row(b)).collect();
        let x = tape.constant(Tensor::from_rows(&rows)?)?;
        self.motion.box_encoder.forward(tape, store, x)
    }

    /// Shared appearance encoding, `batch × D_A`.
    pub fn appearance_features(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        descriptors: &[&[f64]],
    ) -> Result<Var> {
        for d in descriptors {
            self.check_descriptor(d)?;
        }
        let x = tape.constant(Tensor::from_rows(descriptors)?)?;
        self.appearance.encoder.forward(tape, store, x)
    }

    /// Scores every (row of `left`, row of `right`) pair through `head`;
    /// returns the `I × J` logit matrix.
    pub fn pair_scores(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        head: Head,
        left: Var,
        right: Var,
    ) -> Result<Var> {
        let mlp = match head {
            Head::Appearance => &self.heads.appearance,
            Head::Motion => &self.heads.motion,
        };
        let (lv, rv) = (tape.value(left), tape.value(right));
        if lv.cols() + rv.cols() != mlp.input() {
            return Err(Error::shape(
                "pairwise_affinity",
                format!(
                    "features of width {} and {} do not fit a head with input {}",
                    lv.cols(),
                    rv.cols(),
                    mlp.input()
                ),
            ));
        }
        let (rows, cols) = (lv.rows(), rv.rows());
        let (ii, jj) = pair_indices(rows, cols);
        let l = tape.gather_rows(left, &ii)?;
        let r = tape.gather_rows(right, &jj)?;
        let pairs = tape.concat(l, r, Axis::Cols)?;
        let scores = mlp.forward(tape, store, pairs)?;
        tape.reshape(scores, rows, cols)
    }

    /// `S = φ_S([A, M])` element-wise.
    pub fn fuse_scores(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        appearance: Var,
        motion: Var,
    ) -> Result<Var> {
        let (rows, cols) = (tape.value(appearance).rows(), tape.value(appearance).cols());
        if tape.value(motion).shape() != tape.value(appearance).shape() {
            return Err(Error::shape("fuse", "A and M differ in shape"));
        }
        let a = tape.reshape(appearance, rows * cols, 1)?;
        let m = tape.reshape(motion, rows * cols, 1)?;
        let am = tape.concat(a, m, Axis::Cols)?;
        let s = self.heads.fusion.forward(tape, store, am)?;
        tape.reshape(s, rows, cols)
    }

    /// Full affinity forward pass for one problem.
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        tracks: &[TrackObservation],
        detections: &[Detection],
    ) -> Result<AffinityVars> {
        if tracks.is_empty() || detections.is_empty() {
            return Err(Error::invalid(
                "no association problem: trajectories or detections are empty",
            ));
        }
        let tracklets: Vec<&Tracklet> = tracks.iter().map(|t| &t.tracklet).collect();
        let track_motion = self.motion_features(tape, store, &tracklets)?;
        let boxes: Vec<BoundingBox> = detections.iter().map(|d| d.bbox).collect();
        let det_motion = self.box_features(tape, store, &boxes)?;

        let track_desc: Vec<&[f64]> = tracks.iter().map(|t| t.descriptor.as_slice()).collect();
        let det_desc: Vec<&[f64]> = detections.iter().map(|d| d.descriptor.as_slice()).collect();
        let track_app = self.appearance_features(tape, store, &track_desc)?;
        let det_app = self.appearance_features(tape, store, &det_desc)?;

        let appearance = self.pair_scores(tape, store, Head::Appearance, track_app, det_app)?;
        let motion = self.pair_scores(tape, store, Head::Motion, track_motion, det_motion)?;
        let affinity = self.fuse_scores(tape, store, appearance, motion)?;

        let track_features = tape.concat(track_app, track_motion, Axis::Cols)?;
        let detection_features = tape.concat(det_app, det_motion, Axis::Cols)?;
        Ok(AffinityVars {
            appearance,
            motion,
            affinity,
            track_features,
            detection_features,
        })
    }

    /// Motion feature of a single tracklet.
    pub fn encode_motion(&self, store: &ParamStore, tracklet: &Tracklet) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let v = self.motion_features(&mut tape, store, &[tracklet])?;
        Ok(tape.value(v).data().to_vec())
    }

    /// Motion feature of a single detection box.
    pub fn encode_detection_box(&self, store: &ParamStore, b: &BoundingBox) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let v = self.box_features(&mut tape, store, &[*b])?;
        Ok(tape.value(v).data().to_vec())
    }

    /// Appearance feature of a single descriptor.
    pub fn encode_appearance(&self, store: &ParamStore, descriptor: &[f64]) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let v = self.appearance_features(&mut tape, store, &[descriptor])?;
        Ok(tape.value(v).data().to_vec())
    }

    /// Affinity logit of one feature pair under `head`.
    pub fn pairwise_affinity(
        &self,
        store: &ParamStore,
        left: &[f64],
        right: &[f64],
        head: Head,
    ) -> Result<f64> {
        let mut tape = Tape::new();
        let l = tape.constant(Tensor::row_vector(left))?;
        let r = tape.constant(Tensor::row_vector(right))?;
        let s = self.pair_scores(&mut tape, store, head, l, r)?;
        tape.value(s).item()
    }

    pub fn fuse(&self, store: &ParamStore, a: f64, m: f64) -> Result<f64> {
        let mut tape = Tape::new();
        let av = tape.constant(Tensor::scalar(a))?;
        let mv = tape.constant(Tensor::scalar(m))?;
        let s = self.fuse_scores(&mut tape, store, av, mv)?;
        tape.value(s).item()
    }

    /// Packs `A`, `M`, `S`, and the node features into an
    /// [`AssociationProblem`].
    pub fn build_problem(
        &self,
        store: &ParamStore,
        tracks: &[TrackObservation],
        detections: &[Detection],
    ) -> Result<AssociationProblem> {
        let mut tape = Tape::new();
        let v = self.forward(&mut tape, store, tracks, detections)?;
        AssociationProblem::new(
            tape.value(v.appearance).clone(),
            tape.value(v.motion).clone(),
            tape.value(v.affinity).clone(),
            tape.value(v.track_features).clone(),
            tape.value(v.detection_features).clone(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (ParamStore, AffinityNet, Vec<TrackObservation>, Vec<Detection>) {
        let cfg = ModelConfig::tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut store = ParamStore::new();
        let net = AffinityNet::new(&mut store, &cfg, &mut rng).unwrap();
        let b = |k: f64| BoundingBox::new(0.1 * k, 0.2, 0.05, 0.1).unwrap();
        let tracks = (0..3)
            .map(|i| TrackObservation {
                tracklet: Tracklet::from_history(&[b(i as f64), b(i as f64 + 0.1)], 3).unwrap(),
                descriptor: vec![0.1 * i as f64, -0.3, 0.5, 1.0],
            })
            .collect();
        let dets = (0..2)
            .map(|j| Detection {
                bbox: b(j as f64 + 0.2),
                descriptor: vec![0.2, 0.1 * j as f64, -0.4, 0.8],
            })
            .collect();
        (store, net, tracks, dets)
    }

    #[test]
    fn batched_pass_matches_per_pair_calls() {
        let (store, net, tracks, dets) = setup();
        let p = net.build_problem(&store, &tracks, &dets).unwrap();
        assert_eq!(p.affinity.shape(), &[3, 2]);
        assert_eq!(p.feature_dim(), net.feature_dim());
        for (i, t) in tracks.iter().enumerate() {
            let ta = net.encode_appearance(&store, &t.descriptor).unwrap();
            let tm = net.encode_motion(&store, &t.tracklet).unwrap();
            for (j, d) in dets.iter().enumerate() {
                let da = net.encode_appearance(&store, &d.descriptor).unwrap();
                let dm = net.encode_detection_box(&store, &d.bbox).unwrap();
                let a = net.pairwise_affinity(&store, &ta, &da, Head::Appearance).unwrap();
                let m = net.pairwise_affinity(&store, &tm, &dm, Head::Motion).unwrap();
                assert!((p.appearance.get(i, j) - a).abs() < 1e-12);
                assert!((p.motion.get(i, j) - m).abs() < 1e-12);
                assert!((p.affinity.get(i, j) - net.fuse(&store, a, m).unwrap()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn node_features_are_appearance_then_motion() {
        let (store, net, tracks, dets) = setup();
        let p = net.build_problem(&store, &tracks, &dets).unwrap();
        let mut want = net.encode_appearance(&store, &tracks[1].descriptor).unwrap();
        want.extend(net.encode_motion(&store, &tracks[1].tracklet).unwrap());
        assert_eq!(p.track_features.row(1), want.as_slice());
    }

    #[test]
    fn malformed_inputs_are_rejected() {
        let (store, net, mut tracks, dets) = setup();
        assert!(net.build_problem(&store, &[], &dets).is_err());
        assert!(net.build_problem(&store, &tracks, &[]).is_err());
        let mut bad = dets.clone();
        bad[0].descriptor.pop();
        assert!(net.build_problem(&store, &tracks, &bad).is_err());
        let b = BoundingBox::new(0.0, 0.0, 1.0, 1.0).unwrap();
        tracks[0].tracklet = Tracklet::from_history(&[b], 2).unwrap();
        assert!(net.build_problem(&store, &tracks, &dets).is_err());
    }
}
