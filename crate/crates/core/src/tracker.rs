//! Online tracker with birth confirmation and dummy-propagated deaths.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::assoc::{
    interpret_association, AssociationResult, BoundingBox, Detection, TrackObservation, Tracklet,
};
use crate::autodiff::{logistic, Tensor};
use crate::error::{Error, Result};
use crate::model::AssociationModel;
use crate::scenario::FrameRecord;
use crate::solvers::solve_with_birth_death;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    /// Interpret the learned association matrix `X`.
    #[default]
    Learned,
    /// Interpret the fused affinity `S` directly.
    AffinityOnly,
    /// Hungarian on `sigmoid(S)`, pairs below the threshold dropped.
    HungarianBaseline,
    /// Hungarian on IoU between predicted trajectory boxes and detections.
    /// Needs no checkpoint.
    HungarianIou,
    /// Matches by the ground-truth ids carried in the sequence file;
    /// unlabelled detections are never matched.
    Oracle,
}

impl SolverKind {
    pub fn needs_model(self) -> bool {
        !matches!(self, SolverKind::HungarianIou | SolverKind::Oracle)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    pub fps: f64,
    /// Overrides the birth window derived from `fps`.
    pub birth_window: Option<usize>,
    /// Overrides the death window derived from `fps`.
    pub death_window: Option<usize>,
    pub solver: SolverKind,
    pub checkpoint: Option<PathBuf>,
    /// Emit the pending frames of a trajectory once its birth is confirmed.
    pub backfill: bool,
    /// Tracklet length used when no model is loaded.
    pub tracklet_len: usize,
    pub birth_death_threshold: f64,
    pub iou_threshold: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            fps: 10.0,
            birth_window: None,
            death_window: None,
            solver: SolverKind::Learned,
            checkpoint: None,
            backfill: true,
            tracklet_len: 5,
            birth_death_threshold: 0.5,
            iou_threshold: 0.3,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(Error::invalid("tracker.fps must be positive"));
        }
        if self.birth_window == Some(0) || self.death_window == Some(0) {
            return Err(Error::invalid("tracker windows must be at least 1"));
        }
        if self.tracklet_len == 0 {
            return Err(Error::invalid("tracker.tracklet_len must be positive"));
        }
        Ok(())
    }

    /// `T_b`: half the frame rate, rounded, at least 1.
    pub fn birth_frames(&self) -> usize {
        self.birth_window
            .unwrap_or_else(|| ((self.fps / 2.0).round() as usize).max(1))
    }

    /// `T_d`: a sixth of the frame rate, rounded, at least 1.
    pub fn death_frames(&self) -> usize {
        self.death_window
            .unwrap_or_else(|| ((self.fps / 6.0).round() as usize).max(1))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Confirmed,
    /// Consecutive matches since the birth frame.
    PendingBirth(usize),
    /// Frames since the death indication.
    Dummy(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryState {
    pub id: u64,
    /// Recent boxes, oldest first, including propagated dummy boxes.
    pub history: Vec<BoundingBox>,
    pub descriptor: Vec<f64>,
    pub status: Status,
    pub velocity: (f64, f64),
    /// Ground-truth id of the last matched detection, when known.
    pub label: Option<u64>,
    pending: Vec<(usize, BoundingBox)>,
}

/// Transition after a match.
pub fn confirm_birth(status: Status, birth_frames: usize) -> Status {
    match status {
        Status::PendingBirth(c) if c + 1 >= birth_frames => Status::Confirmed,
        Status::PendingBirth(c) => Status::PendingBirth(c + 1),
        _ => Status::Confirmed,
    }
}

/// Transition after a missed frame; `None` means the trajectory ends.
pub fn handle_death(status: Status, death_frames: usize) -> Option<Status> {
    match status {
        Status::PendingBirth(_) => None,
        Status::Confirmed => Some(Status::Dummy(0)),
        Status::Dummy(c) if c + 1 >= death_frames => None,
        Status::Dummy(c) => Some(Status::Dummy(c + 1)),
    }
}

/// Least-squares slope of box centres against frame index; zero for a
/// single box.
pub fn estimate_velocity(boxes: &[BoundingBox]) -> (f64, f64) {
    let n = boxes.len();
    if n < 2 {
        return (0.0, 0.0);
    }
    let tbar = (n - 1) as f64 / 2.0;
    let (mut sx, mut sy) = (0.0, 0.0);
    let centres: Vec<(f64, f64)> = boxes.iter().map(BoundingBox::center).collect();
    let xbar = centres.iter().map(|c| c.0).sum::<f64>() / n as f64;
    let ybar = centres.iter().map(|c| c.1).sum::<f64>() / n as f64;
    let mut stt = 0.0;
    for (k, c) in centres.iter().enumerate() {
        let dt = k as f64 - tbar;
        sx += dt * (c.0 - xbar);
        sy += dt * (c.1 - ybar);
        stt += dt * dt;
    }
    (sx / stt, sy / stt)
}

/// One output row of the track file.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackRecord {
    pub frame: usize,
    pub id: u64,
    pub bbox: BoundingBox,
}

pub struct Tracker {
    config: TrackerConfig,
    model: Option<AssociationModel>,
    tracklet_len: usize,
    trajectories: Vec<TrajectoryState>,
    next_id: u64,
}

impl Tracker {
    pub fn new(config: TrackerConfig, model: Option<AssociationModel>) -> Result<Self> {
        config.validate()?;
        if config.solver.needs_model() && model.is_none() {
            return Err(Error::invalid(format!(
                "solver {:?} needs a trained checkpoint",
                config.solver
            )));
        }
        let tracklet_len = model
            .as_ref()
            .map_or(config.tracklet_len, |m| m.config.tracklet_len);
        Ok(Self {
            config,
            model,
            tracklet_len,
            trajectories: Vec::new(),
            next_id: 1,
        })
    }

    /// Loads the checkpoint named in the config when the solver needs one.
    pub fn from_config(config: TrackerConfig) -> Result<Self> {
        let model = if config.solver.needs_model() {
            let path = config.checkpoint.as_ref().ok_or_else(|| {
                Error::invalid("tracker.checkpoint is required for this solver")
            })?;
            if !path.exists() {
                return Err(Error::invalid(format!(
                    "checkpoint {} does not exist",
                    path.display()
                )));
            }
            Some(AssociationModel::load(path)?)
        } else {
            None
        };
        Self::new(config, model)
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    pub fn trajectories(&self) -> &[TrajectoryState] {
        &self.trajectories
    }

    fn observation(&self, t: &TrajectoryState) -> Result<TrackObservation> {
        Ok(TrackObservation {
            tracklet: Tracklet::from_history(&t.history, self.tracklet_len)?,
            descriptor: t.descriptor.clone(),
        })
    }

    fn solve(&self, detections: &[Detection], labels: &[Option<u64>]) -> Result<AssociationResult> {
        let rows = self.trajectories.len();
        let cols = detections.len();
        if rows == 0 || cols == 0 {
            return Ok(AssociationResult::from_matches(Vec::new(), rows, cols));
        }
        if self.config.solver == SolverKind::Oracle {
            let mut matches = Vec::new();
            for (i, t) in self.trajectories.iter().enumerate() {
                let hit = t
                    .label
                    .and_then(|g| labels.iter().position(|&l| l == Some(g)));
                if let Some(j) = hit {
                    matches.push((i, j));
                }
            }
            return Ok(AssociationResult::from_matches(matches, rows, cols));
        }
        if self.config.solver == SolverKind::HungarianIou {
            let mut iou = Tensor::zeros(rows, cols);
            for (i, t) in self.trajectories.iter().enumerate() {
                let last = t.history.last().expect("history is never empty");
                let predicted = last.translated(t.velocity.0, t.velocity.1);
                for (j, d) in detections.iter().enumerate() {
                    iou.set(i, j, predicted.iou(&d.bbox));
                }
            }
            return solve_with_birth_death(&iou, self.config.iou_threshold);
        }
        let model = self.model.as_ref().expect("checked at construction");
        let tracks = self
            .trajectories
            .iter()
            .map(|t| self.observation(t))
            .collect::<Result<Vec<_>>>()?;
        let (problem, x) = model.associate(&tracks, detections)?;
        match self.config.solver {
            SolverKind::Learned => interpret_association(&x),
            SolverKind::AffinityOnly => interpret_association(&problem.affinity),
            SolverKind::HungarianBaseline => solve_with_birth_death(
                &problem.affinity.map(logistic),
                self.config.birth_death_threshold,
            ),
            SolverKind::HungarianIou | SolverKind::Oracle => unreachable!(),
        }
    }

    fn push_box(&self, t: &mut TrajectoryState, b: BoundingBox) {
        t.history.push(b);
        if t.history.len() > self.tracklet_len {
            let excess = t.history.len() - self.tracklet_len;
            t.history.drain(..excess);
        }
    }

    /// Advances one frame and returns the records emitted for it (plus any
    /// backfilled records of newly confirmed trajectories).
    pub fn step(&mut self, frame: usize, detections: &[Detection]) -> Result<Vec<TrackRecord>> {
        self.step_labelled(frame, detections, &vec![None; detections.len()])
    }

    /// Like [`Tracker::step`], with the ground-truth id of each detection
    /// (`None` for clutter). Only the oracle solver reads the labels.
    pub fn step_labelled(
        &mut self,
        frame: usize,
        detections: &[Detection],
        labels: &[Option<u64>],
    ) -> Result<Vec<TrackRecord>> {
        if labels.len() != detections.len() {
            return Err(Error::invalid(format!(
                "{} labels for {} detections",
                labels.len(),
                detections.len()
            )));
        }
        let result = self.solve(detections, labels)?;
        result.validate(self.trajectories.len(), detections.len())?;
        let (tb, td) = (self.config.birth_frames(), self.config.death_frames());
        let mut emitted = Vec::new();
        let previous = std::mem::take(&mut self.trajectories);
        let mut kept = Vec::with_capacity(previous.len() + result.births.len());

        for (i, mut t) in previous.into_iter().enumerate() {
            match result.match_for_track(i) {
                Some(j) => {
                    let d = &detections[j];
                    let was_pending = matches!(t.status, Status::PendingBirth(_));
                    self.push_box(&mut t, d.bbox);
                    t.descriptor = d.descriptor.clone();
                    t.label = labels[j];
                    t.velocity = estimate_velocity(&t.history);
                    t.status = confirm_birth(t.status, tb);
                    match t.status {
                        Status::Confirmed => {
                            if was_pending && self.config.backfill {
                                emitted.extend(t.pending.drain(..).map(|(f, b)| TrackRecord {
                                    frame: f,
                                    id: t.id,
                                    bbox: b,
                                }));
                            }
                            t.pending.clear();
                            emitted.push(TrackRecord {
                                frame,
                                id: t.id,
                                bbox: d.bbox,
                            });
                        }
                        _ => t.pending.push((frame, d.bbox)),
                    }
                    kept.push(t);
                }
                None => {
                    if let Some(status) = handle_death(t.status, td) {
                        t.status = status;
                        let last = *t.history.last().expect("history is never empty");
                        let (dx, dy) = t.velocity;
                        self.push_box(&mut t, last.translated(dx, dy));
                        kept.push(t);
                    }
                }
            }
        }

        for &j in &result.births {
            let d = &detections[j];
            let id = self.next_id;
            self.next_id += 1;
            let t = TrajectoryState {
                id,
                history: vec![d.bbox],
                descriptor: d.descriptor.clone(),
                status: Status::PendingBirth(0),
                velocity: (0.0, 0.0),
                label: labels[j],
                pending: vec![(frame, d.bbox)],
            };
            kept.push(t);
        }
        self.trajectories = kept;
        Ok(emitted)
    }

    /// Tracks a whole sequence; records are sorted by frame, then id.
    pub fn run(&mut self, frames: &[FrameRecord]) -> Result<Vec<TrackRecord>> {
        let mut out = Vec::new();
        for f in frames {
            let labels: Vec<Option<u64>> = f.detections.iter().map(|d| d.gt_id).collect();
            out.extend(self.step_labelled(f.frame, &f.detections(), &labels)?);
        }
        out.sort_by_key(|r| (r.frame, r.id));
        Ok(out)
    }
}

pub fn write_tracks(path: impl AsRef<Path>, records: &[TrackRecord]) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    writeln!(out, "frame,id,x,y,w,h")?;
    for r in records {
        let b = r.bbox;
        writeln!(out, "{},{},{},{},{},{}", r.frame, r.id, b.x, b.y, b.w, b.h)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_tracks(path: impl AsRef<Path>) -> Result<Vec<TrackRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut rows = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (n == 0 && line.starts_with("frame")) {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 6 {
            return Err(err(n + 1, format!("expected 6 fields, found {}", f.len())));
        }
        let frame = f[0].parse().map_err(|e| err(n + 1, format!("frame: {e}")))?;
        let id = f[1].parse().map_err(|e| err(n + 1, format!("id: {e}")))?;
        let mut v = [0.0; 4];
        for k in 0..4 {
            v[k] = f[k + 2].parse().map_err(|e| err(n + 1, format!("box: {e}")))?;
        }
        let bbox = BoundingBox::try_from(v).map_err(|e| err(n + 1, e.to_string()))?;
        rows.push(TrackRecord { frame, id, bbox });
    }
    Ok(rows)
}
