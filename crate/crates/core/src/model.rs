//! The end-to-end association model: affinity network plus message-passing
//! optimizer over one parameter store.

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::affinity::{AffinityNet, AffinityVars};
use crate::assoc::{AssociationProblem, Detection, TrackObservation};
use crate::autodiff::{checkpoint, ParamStore, Tape, Tensor, Var};
use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::gnn::Gnn;

/// Which matrix the model reports as its association output.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// `X` from the message-passing module.
    #[default]
    Full,
    /// The fused affinity `S`, bypassing the message-passing module.
    NoGnn,
}

impl Variant {
    fn code(self) -> f64 {
        match self {
            Variant::Full => 0.0,
            Variant::NoGnn => 1.0,
        }
    }

    fn from_code(v: f64) -> Result<Self> {
        match v {
            x if x == 0.0 => Ok(Variant::Full),
            x if x == 1.0 => Ok(Variant::NoGnn),
            _ => Err(Error::Checkpoint(format!("unknown model variant code {v}"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct AssociationModel {
    pub store: ParamStore,
    pub affinity: AffinityNet,
    pub gnn: Gnn,
    pub config: ModelConfig,
    pub variant: Variant,
}

/// Tape handles for one forward pass.
#[derive(Clone, Copy, Debug)]
pub struct ModelVars {
    pub affinity: AffinityVars,
    /// The association output (`X`, or `S` for [`Variant::NoGnn`]).
    pub output: Var,
}

impl AssociationModel {
    pub fn new(config: ModelConfig, variant: Variant) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let mut store = ParamStore::new();
        let affinity = AffinityNet::new(&mut store, &config, &mut rng)?;
        let gnn = Gnn::new(&mut store, &config, &mut rng)?;
        Ok(Self {
            store,
            affinity,
            gnn,
            config,
            variant,
        })
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        tracks: &[TrackObservation],
        detections: &[Detection],
    ) -> Result<ModelVars> {
        let a = self.affinity.forward(tape, &self.store, tracks, detections)?;
        let output = match self.variant {
            Variant::Full => self.gnn.forward(
                tape,
                &self.store,
                a.affinity,
                a.track_features,
                a.detection_features,
            )?,
            Variant::NoGnn => a.affinity,
        };
        Ok(ModelVars {
            affinity: a,
            output,
        })
    }

    /// Builds the problem and its association output without recording
    /// gradients for later use.
    pub fn associate(
        &self,
        tracks: &[TrackObservation],
        detections: &[Detection],
    ) -> Result<(AssociationProblem, Tensor)> {
        let mut tape = Tape::new();
        let v = self.forward(&mut tape, tracks, detections)?;
        let a = v.affinity;
        let problem = AssociationProblem::new(
            tape.value(a.appearance).clone(),
            tape.value(a.motion).clone(),
            tape.value(a.affinity).clone(),
            tape.value(a.track_features).clone(),
            tape.value(a.detection_features).clone(),
        )?;
        Ok((problem, tape.value(v.output).clone()))
    }

    pub fn to_tensors(&self) -> BTreeMap<String, Tensor> {
        let mut map = self.store.named_values();
        map.insert(
            "meta.arena".into(),
            Tensor::row_vector(&self.config.arena),
        );
        map.insert(
            "meta.tracklet_len".into(),
            Tensor::scalar(self.config.tracklet_len as f64),
        );
        map.insert("meta.variant".into(), Tensor::scalar(self.variant.code()));
        map
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        checkpoint::save(path, &self.to_tensors())
    }

    /// Rebuilds a model from checkpoint tensors; layer widths are read from
    /// the tensor shapes.
    pub fn from_tensors(tensors: &BTreeMap<String, Tensor>) -> Result<Self> {
        let get = |name: &str| {
            tensors
                .get(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))
        };
        let arena = get("meta.arena")?;
        if arena.len() != 2 {
            return Err(Error::Checkpoint("meta.arena must hold two values".into()));
        }
        let tracklet_len = get("meta.tracklet_len")?.item()?;
        if !(tracklet_len >= 1.0 && tracklet_len.fract() == 0.0) {
            return Err(Error::Checkpoint("meta.tracklet_len is not a count".into()));
        }
        let variant = Variant::from_code(get("meta.variant")?.item()?)?;
        let app0 = get("affinity.appearance.l0.weight")?;
        let app1 = get("affinity.appearance.l1.weight")?;
        let config = ModelConfig {
            descriptor_dim: app0.rows(),
            encoder_hidden: app0.cols(),
            appearance_dim: app1.cols(),
            motion_dim: get("affinity.motion.lstm.w_hh")?.rows(),
            head_hidden: get("affinity.head.appearance.l0.weight")?.cols(),
            gnn_dim: get("gnn.embedding")?.cols(),
            relation_hidden: get("gnn.relation.l0.weight")?.cols(),
            tracklet_len: tracklet_len as usize,
            arena: [arena.data()[0], arena.data()[1]],
            init_seed: 0,
        };
        let mut model = Self::new(config, variant)?;
        model.store.load_values(tensors)?;
        Ok(model)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_tensors(&checkpoint::load(path)?)
    }
}
