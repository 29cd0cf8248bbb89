//! Association problem types, ground-truth matrices, and interpretation of an
//! association matrix into matches, births, and deaths.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Axis-aligned box; `(x, y)` is the top-left corner.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "[f64; 4]", try_from = "[f64; 4]")]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        let b = Self { x, y, w, h };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if ![self.x, self.y, self.w, self.h].iter().all(|v| v.is_finite()) {
            return Err(Error::invalid(format!("non-finite box {self:?}")));
        }
        if self.w <= 0.0 || self.h <= 0.0 {
            return Err(Error::invalid(format!("box with non-positive size {self:?}")));
        }
        Ok(())
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + 0.5 * self.w, self.y + 0.5 * self.h)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self {
            x: self.x + dx,
            y: self.y + dy,
            ..*self
        }
    }

    /// Intersection over union.
    pub fn iou(&self, other: &BoundingBox) -> f64 {
        let ix = (self.x + self.w).min(other.x + other.w) - self.x.max(other.x);
        let iy = (self.y + self.h).min(other.y + other.h) - self.y.max(other.y);
        if ix <= 0.0 || iy <= 0.0 {
            return 0.0;
        }
        let inter = ix * iy;
        inter / (self.area() + other.area() - inter)
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x, self.y, self.w, self.h]
    }

    /// Coordinates divided by the arena extent.
    pub fn normalized(&self, arena_w: f64, arena_h: f64) -> [f64; 4] {
        [
            self.x / arena_w,
            self.y / arena_h,
            self.w / arena_w,
            self.h / arena_h,
        ]
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> Self {
        b.to_array()
    }
}

impl TryFrom<[f64; 4]> for BoundingBox {
    type Error = Error;
    fn try_from(v: [f64; 4]) -> Result<Self> {
        BoundingBox::new(v[0], v[1], v[2], v[3])
    }
}

/// The most recent `len` boxes of a trajectory, oldest first.
#[derive(Clone, Debug, PartialEq)]
pub struct Tracklet {
    boxes: Vec<BoundingBox>,
}

impl Tracklet {
    /// Takes the newest `len` boxes of `history` (chronological order) and
    /// pads short histories by repeating the oldest box.
    pub fn from_history(history: &[BoundingBox], len: usize) -> Result<Self> {
        if history.is_empty() {
            return Err(Error::invalid("tracklet needs at least one box"));
        }
        if len == 0 {
            return Err(Error::invalid("tracklet length must be positive"));
        }
        let start = history.len().saturating_sub(len);
        let recent = &history[start..];
        let mut boxes = vec![recent[0]; len - recent.len()];
        boxes.extend_from_slice(recent);
        Ok(Self { boxes })
    }

    pub fn boxes(&self) -> &[BoundingBox] {
        &self.boxes
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    pub fn last(&self) -> &BoundingBox {
        self.boxes.last().expect("tracklets are never empty")
    }
}

/// Trajectory-side input to the affinity network.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackObservation {
    pub tracklet: Tracklet,
    /// Appearance descriptor of the newest real observation.
    pub descriptor: Vec<f64>,
}

/// Detection-side input to the affinity network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub descriptor: Vec<f64>,
}

/// One bipartite association problem between `I` trajectories and `J`
/// detections.
#[derive(Clone, Debug, PartialEq)]
pub struct AssociationProblem {
    /// Appearance affinities, `I × J`.
    pub appearance: Tensor,
    /// Motion affinities, `I × J`.
    pub motion: Tensor,
    /// Fused affinities, `I × J`.
    pub affinity: Tensor,
    /// Trajectory node features, `I × D`.
    pub track_features: Tensor,
    /// Detection node features, `J × D`.
    pub detection_features: Tensor,
}

impl AssociationProblem {
    pub fn new(
        appearance: Tensor,
        motion: Tensor,
        affinity: Tensor,
        track_features: Tensor,
        detection_features: Tensor,
    ) -> Result<Self> {
        let p = Self {
            appearance,
            motion,
            affinity,
            track_features,
            detection_features,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn tracks(&self) -> usize {
        self.affinity.rows()
    }

    pub fn detections(&self) -> usize {
        self.affinity.cols()
    }

    pub fn feature_dim(&self) -> usize {
        self.track_features.cols()
    }

    /// Relabels trajectories and detections: row `r` of the result is
    /// trajectory `rows[r]`, column `c` is detection `cols[c]`.
    pub fn permuted(&self, rows: &[usize], cols: &[usize]) -> Result<Self> {
        let is_perm = |p: &[usize], n: usize| {
            let mut seen = vec![false; n];
            p.len() == n && p.iter().all(|&k| k < n && !std::mem::replace(&mut seen[k], true))
        };
        if !is_perm(rows, self.tracks()) || !is_perm(cols, self.detections()) {
            return Err(Error::invalid("not a permutation of the problem's nodes"));
        }
        let all = |m: &Tensor| (0..m.cols()).collect::<Vec<_>>();
        Self::new(
            self.appearance.select(rows, cols),
            self.motion.select(rows, cols),
            self.affinity.select(rows, cols),
            self.track_features.select(rows, &all(&self.track_features)),
            self.detection_features.select(cols, &all(&self.detection_features)),
        )
    }

    pub fn validate(&self) -> Result<()> {
        let (i, j) = (self.affinity.rows(), self.affinity.cols());
        if i == 0 || j == 0 {
            return Err(Error::invalid("association problem needs I ≥ 1 and J ≥ 1"));
        }
        for (name, m) in [("appearance", &self.appearance), ("motion", &self.motion)] {
            if m.shape() != self.affinity.shape() {
                return Err(Error::shape(
                    "problem",
                    format!("{name} is {:?}, affinity is {i}×{j}", m.shape()),
                ));
            }
        }
        if self.track_features.rows() != i || self.detection_features.rows() != j {
            return Err(Error::shape("problem", "node feature rows must equal I and J"));
        }
        if self.track_features.cols() != self.detection_features.cols() {
            return Err(Error::shape("problem", "node feature widths differ"));
        }
        Ok(())
    }
}

/// Binary ground-truth association matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruthMatrix {
    entries: Tensor,
    matches: Vec<(usize, usize)>,
}

/// One-hot rows/columns for the listed pairs, all-zero rows and columns for
/// deaths and births.
pub fn build_ground_truth(
    matches: &[(usize, usize)],
    rows: usize,
    cols: usize,
) -> Result<GroundTruthMatrix> {
    let mut entries = Tensor::zeros(rows, cols);
    let mut seen_r = BTreeSet::new();
    let mut seen_c = BTreeSet::new();
    for &(i, j) in matches {
        if i >= rows || j >= cols {
            return Err(Error::invalid(format!(
                "match ({i},{j}) out of range for {rows}×{cols}"
            )));
        }
        if !seen_r.insert(i) || !seen_c.insert(j) {
            return Err(Error::invalid(format!("match ({i},{j}) reuses an index")));
        }
        entries.set(i, j, 1.0);
    }
    let mut matches = matches.to_vec();
    matches.sort_unstable();
    Ok(GroundTruthMatrix { entries, matches })
}

impl GroundTruthMatrix {
    pub fn entries(&self) -> &Tensor {
        &self.entries
    }

    pub fn rows(&self) -> usize {
        self.entries.rows()
    }

    pub fn cols(&self) -> usize {
        self.entries.cols()
    }

    /// Matched pairs sorted by row.
    pub fn matches(&self) -> &[(usize, usize)] {
        &self.matches
    }

    pub fn k(&self) -> usize {
        self.matches.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries.get(i, j)
    }

    pub fn matched_rows(&self) -> BTreeSet<usize> {
        self.matches.iter().map(|&(i, _)| i).collect()
    }

    pub fn matched_cols(&self) -> BTreeSet<usize> {
        self.matches.iter().map(|&(_, j)| j).collect()
    }

    /// Rows whose ground truth is all zero.
    pub fn death_rows(&self) -> Vec<usize> {
        let m = self.matched_rows();
        (0..self.rows()).filter(|i| !m.contains(i)).collect()
    }

    /// Columns whose ground truth is all zero.
    pub fn birth_cols(&self) -> Vec<usize> {
        let m = self.matched_cols();
        (0..self.cols()).filter(|j| !m.contains(j)).collect()
    }

    /// Recovers the match list from the matrix entries.
    pub fn extract_matches(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.rows() {
            for j in 0..self.cols() {
                if self.get(i, j) == 1.0 {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

/// Matches `O`, births `B` (detection indices), deaths `D` (trajectory
/// indices).
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssociationResult {
    /// Sorted by trajectory index.
    pub matches: Vec<(usize, usize)>,
    /// Sorted ascending.
    pub births: Vec<usize>,
    /// Sorted ascending.
    pub deaths: Vec<usize>,
}

impl AssociationResult {
    /// Builds the result for a partial matching: every unmatched row is a
    /// death and every unmatched column a birth.
    pub fn from_matches(mut matches: Vec<(usize, usize)>, rows: usize, cols: usize) -> Self {
        matches.sort_unstable();
        let mr: BTreeSet<usize> = matches.iter().map(|&(i, _)| i).collect();
        let mc: BTreeSet<usize> = matches.iter().map(|&(_, j)| j).collect();
        Self {
            deaths: (0..rows).filter(|i| !mr.contains(i)).collect(),
            births: (0..cols).filter(|j| !mc.contains(j)).collect(),
            matches,
        }
    }

    pub fn match_for_track(&self, i: usize) -> Option<usize> {
        self.matches.iter().find(|&&(r, _)| r == i).map(|&(_, j)| j)
    }

    /// Checks that rows and columns are each partitioned exactly once.
    pub fn validate(&self, rows: usize, cols: usize) -> Result<()> {
        let mut row_seen = vec![false; rows];
        let mut col_seen = vec![false; cols];
        let mark = |seen: &mut Vec<bool>, k: usize, what: &str| -> Result<()> {
            match seen.get_mut(k) {
                Some(s) if !*s => {
                    *s = true;
                    Ok(())
                }
                Some(_) => Err(Error::invalid(format!("{what} {k} assigned twice"))),
                None => Err(Error::invalid(format!("{what} {k} out of range"))),
            }
        };
        for &(i, j) in &self.matches {
            mark(&mut row_seen, i, "row")?;
            mark(&mut col_seen, j, "column")?;
        }
        for &i in &self.deaths {
            mark(&mut row_seen, i, "row")?;
        }
        for &j in &self.births {
            mark(&mut col_seen, j, "column")?;
        }
        if row_seen.iter().any(|s| !s) || col_seen.iter().any(|s| !s) {
            return Err(Error::invalid("association result does not cover every index"));
        }
        Ok(())
    }

    /// `I × J` indicator matrix of the matches.
    pub fn indicator(&self, rows: usize, cols: usize) -> Tensor {
        let mut t = Tensor::zeros(rows, cols);
        for &(i, j) in &self.matches {
            t.set(i, j, 1.0);
        }
        t
    }
}

/// Greedy interpretation of an association matrix.
///
/// Repeatedly takes the largest available entry; while it is strictly
/// positive its row and column are matched and retired. Remaining rows become
/// deaths and remaining columns births. Ties go to the smallest row, then the
/// smallest column.
pub fn interpret_association(x: &Tensor) -> Result<AssociationResult> {
    if x.data().iter().any(|v| v.is_nan()) {
        return Err(Error::invalid("association matrix contains NaN"));
    }
    let (rows, cols) = (x.rows(), x.cols());
    let mut candidates: Vec<(f64, usize, usize)> = (0..rows)
        .flat_map(|i| (0..cols).map(move |j| (i, j)))
        .map(|(i, j)| (x.get(i, j), i, j))
        .filter(|&(v, _, _)| v > 0.0)
        .collect();
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut row_free = vec![true; rows];
    let mut col_free = vec![true; cols];
    let mut matches = Vec::new();
    for (_, i, j) in candidates {
        if row_free[i] && col_free[j] {
            row_free[i] = false;
            col_free[j] = false;
            matches.push((i, j));
        }
    }
    Ok(AssociationResult::from_matches(matches, rows, cols))
}
