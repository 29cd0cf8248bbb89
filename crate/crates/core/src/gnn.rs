//! Bipartite graph-neural optimization module.
//!
//! One synchronized round of message passing replaces each trajectory's
//! feature with the softmax(S)-weighted mix of detection features (and vice
//! versa through Sᵀ), embeds it with a shared weight `W`, and then scores
//! every edge from the difference of its two endpoint features.

use rand::Rng;

use crate::affinity::pair_indices;
use crate::assoc::AssociationProblem;
use crate::autodiff::{ParamId, ParamStore, Tape, Tensor, Var};
use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::nn::Mlp;

#[derive(Clone, Debug)]
pub struct Gnn {
    /// Shared embedding `D × C`.
    pub embedding: ParamId,
    /// `C → hidden → 1`.
    pub relation: Mlp,
    feature_dim: usize,
    embed_dim: usize,
}

impl Gnn {
    pub fn new<R: Rng>(store: &mut ParamStore, cfg: &ModelConfig, rng: &mut R) -> Result<Self> {
        let d = cfg.appearance_dim + cfg.motion_dim;
        let c = cfg.gnn_dim;
        Ok(Self {
            embedding: store.add_glorot("gnn.embedding", d, c, rng)?,
            relation: Mlp::new(store, "gnn.relation", &[c, cfg.relation_hidden, 1], rng)?,
            feature_dim: d,
            embed_dim: c,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    /// Number of learnable scalars; independent of the problem size.
    pub fn parameter_count(&self, store: &ParamStore) -> usize {
        let mut n = store.get(self.embedding).value.len();
        for l in &self.relation.layers {
            n += store.get(l.weight).value.len() + store.get(l.bias).value.len();
        }
        n
    }

    /// `F'_M = ReLU(softmax(S) F_N W)`, `F'_N = ReLU(softmax(Sᵀ) F_M W)`, both
    /// from the pre-update features.
    pub fn feature_update(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        affinity: Var,
        track_features: Var,
        detection_features: Var,
    ) -> Result<(Var, Var)> {
        let (s, fm, fnn) = (
            tape.value(affinity),
            tape.value(track_features),
            tape.value(detection_features),
        );
        if fm.rows() != s.rows() || fnn.rows() != s.cols() {
            return Err(Error::shape(
                "feature_update",
                format!(
                    "S is {:?} but node features are {:?} and {:?}",
                    s.shape(),
                    fm.shape(),
                    fnn.shape()
                ),
            ));
        }
        if fm.cols() != self.feature_dim || fnn.cols() != self.feature_dim {
            return Err(Error::shape(
                "feature_update",
                format!("node features must have width {}", self.feature_dim),
            ));
        }
        let w = tape.param(store, self.embedding);

        let weights = tape.row_softmax(affinity)?;
        let mixed = tape.aggregate(weights, detection_features)?;
        let embedded = tape.matmul(mixed, w)?;
        let tracks = tape.relu(embedded)?;

        let st = tape.transpose(affinity)?;
        let weights_t = tape.row_softmax(st)?;
        let mixed_t = tape.aggregate(weights_t, track_features)?;
        let embedded_t = tape.matmul(mixed_t, w)?;
        let detections = tape.relu(embedded_t)?;
        Ok((tracks, detections))
    }

    /// `x_ij = MLP(F'_M[i] − F'_N[j])` for every pair.
    pub fn relation_update(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        tracks: Var,
        detections: Var,
    ) -> Result<Var> {
        let (tv, dv) = (tape.value(tracks), tape.value(detections));
        if tv.cols() != self.embed_dim || dv.cols() != self.embed_dim {
            return Err(Error::shape(
                "relation_update",
                format!(
                    "features are {:?} and {:?}, expected width {}",
                    tv.shape(),
                    dv.shape(),
                    self.embed_dim
                ),
            ));
        }
        let (rows, cols) = (tv.rows(), dv.rows());
        let (ii, jj) = pair_indices(rows, cols);
        let l = tape.gather_rows(tracks, &ii)?;
        let r = tape.gather_rows(detections, &jj)?;
        let diff = tape.sub(l, r)?;
        let scores = self.relation.forward(tape, store, diff)?;
        tape.reshape(scores, rows, cols)
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        affinity: Var,
        track_features: Var,
        detection_features: Var,
    ) -> Result<Var> {
        let (t, d) =
            self.feature_update(tape, store, affinity, track_features, detection_features)?;
        self.relation_update(tape, store, t, d)
    }

    /// Value-level [`Gnn::feature_update`].
    pub fn feature_update_values(
        &self,
        store: &ParamStore,
        affinity: &Tensor,
        track_features: &Tensor,
        detection_features: &Tensor,
    ) -> Result<(Tensor, Tensor)> {
        let mut tape = Tape::new();
        let s = tape.constant(affinity.clone())?;
        let fm = tape.constant(track_features.clone())?;
        let fnn = tape.constant(detection_features.clone())?;
        let (a, b) = self.feature_update(&mut tape, store, s, fm, fnn)?;
        Ok((tape.value(a).clone(), tape.value(b).clone()))
    }

    /// Value-level [`Gnn::relation_update`].
    pub fn relation_update_values(
        &self,
        store: &ParamStore,
        tracks: &Tensor,
        detections: &Tensor,
    ) -> Result<Tensor> {
        let mut tape = Tape::new();
        let t = tape.constant(tracks.clone())?;
        let d = tape.constant(detections.clone())?;
        let x = self.relation_update(&mut tape, store, t, d)?;
        Ok(tape.value(x).clone())
    }

    /// Association matrix `X` for a packed problem.
    pub fn gnn_forward(&self, store: &ParamStore, problem: &AssociationProblem) -> Result<Tensor> {
        problem.validate()?;
        let mut tape = Tape::new();
        let s = tape.constant(problem.affinity.clone())?;
        let fm = tape.constant(problem.track_features.clone())?;
        let fnn = tape.constant(problem.detection_features.clone())?;
        let x = self.forward(&mut tape, store, s, fm, fnn)?;
        Ok(tape.value(x).clone())
    }
}
