//! CLEAR-MOT scoring of track files against ground truth.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::assoc::BoundingBox;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::scenario::FrameRecord;
use crate::solvers::hungarian;
use crate::tracker::TrackRecord;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub iou_threshold: f64,
    /// Coverage at or above which a ground-truth track is mostly tracked.
    pub mostly_tracked: f64,
    /// Coverage at or below which a ground-truth track is mostly lost.
    pub mostly_lost: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            iou_threshold: 0.5,
            mostly_tracked: 0.8,
            mostly_lost: 0.2,
        }
    }
}

impl MetricsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.iou_threshold > 0.0 && self.iou_threshold <= 1.0) {
            return Err(Error::invalid("metrics.iou_threshold must lie in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.mostly_tracked) || !(0.0..=1.0).contains(&self.mostly_lost)
        {
            return Err(Error::invalid("metrics coverage thresholds must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mota: f64,
    /// Mean IoU of matched pairs.
    pub motp: f64,
    pub idf1: f64,
    pub id_switches: usize,
    /// Fraction of ground-truth tracks that are mostly tracked.
    pub mostly_tracked: f64,
    /// Fraction of ground-truth tracks that are mostly lost.
    pub mostly_lost: f64,
    pub fragmentations: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub gt_count: usize,
    pub matches: usize,
    pub gt_tracks: usize,
}

impl MetricsReport {
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let rows: [(&str, String); 12] = [
            ("MOTA", format!("{:.4}", self.mota)),
            ("MOTP", format!("{:.4}", self.motp)),
            ("IDF1", format!("{:.4}", self.idf1)),
            ("IDSW", self.id_switches.to_string()),
            ("MT", format!("{:.4}", self.mostly_tracked)),
            ("ML", format!("{:.4}", self.mostly_lost)),
            ("Frag", self.fragmentations.to_string()),
            ("FP", self.false_positives.to_string()),
            ("FN", self.false_negatives.to_string()),
            ("GT", self.gt_count.to_string()),
            ("matches", self.matches.to_string()),
            ("GT tracks", self.gt_tracks.to_string()),
        ];
        for (k, v) in rows {
            let _ = writeln!(s, "{k:<10} {v:>10}");
        }
        s
    }
}

/// Ground-truth boxes per frame, keyed by identity.
pub type GroundTruth = BTreeMap<usize, Vec<(u64, BoundingBox)>>;

pub fn ground_truth(frames: &[FrameRecord]) -> GroundTruth {
    frames
        .iter()
        .map(|f| (f.frame, f.gt.iter().map(|g| (g.id, g.bbox)).collect()))
        .collect()
}

fn box_key(b: &BoundingBox) -> [u64; 4] {
    b.to_array().map(f64::to_bits)
}

/// Per-frame matching: continue last frame's pairs that still overlap, then
/// assign the rest with the Hungarian solver on IoU.
fn match_frame(
    gt: &[(u64, BoundingBox)],
    pred: &[(u64, BoundingBox)],
    previous: &BTreeMap<u64, u64>,
    threshold: f64,
) -> Result<Vec<(usize, usize)>> {
    let mut pairs = Vec::new();
    let mut used_g = vec![false; gt.len()];
    let mut used_p = vec![false; pred.len()];
    for (gi, (gid, gb)) in gt.iter().enumerate() {
        if let Some(pid) = previous.get(gid) {
            if let Some(pi) = pred.iter().position(|(id, _)| id == pid) {
                if !used_p[pi] && gb.iou(&pred[pi].1) >= threshold {
                    pairs.push((gi, pi));
                    used_g[gi] = true;
                    used_p[pi] = true;
                }
            }
        }
    }
    let free_g: Vec<usize> = (0..gt.len()).filter(|&g| !used_g[g]).collect();
    let free_p: Vec<usize> = (0..pred.len()).filter(|&p| !used_p[p]).collect();
    if !free_g.is_empty() && !free_p.is_empty() {
        let mut iou = Tensor::zeros(free_g.len(), free_p.len());
        for (a, &g) in free_g.iter().enumerate() {
            for (b, &p) in free_p.iter().enumerate() {
                let v = gt[g].1.iou(&pred[p].1);
                if v >= threshold {
                    iou.set(a, b, v);
                }
            }
        }
        for (a, b) in hungarian(&iou)?.pairs {
            if iou.get(a, b) > 0.0 {
                pairs.push((free_g[a], free_p[b]));
            }
        }
    }
    Ok(pairs)
}

pub fn evaluate(
    tracks: &[TrackRecord],
    gt: &GroundTruth,
    cfg: &MetricsConfig,
) -> Result<MetricsReport> {
    cfg.validate()?;
    let mut preds: BTreeMap<usize, Vec<(u64, BoundingBox)>> = BTreeMap::new();
    for r in tracks {
        r.bbox.validate()?;
        preds.entry(r.frame).or_default().push((r.id, r.bbox));
    }
    for (frame, p) in &mut preds {
        p.sort_by_key(|(id, b)| (box_key(b), *id));
        if p.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::invalid(format!("frame {frame} repeats a track id")));
        }
    }
    let frames: BTreeSet<usize> = gt.keys().chain(preds.keys()).copied().collect();

    let (mut fp, mut fneg, mut idsw, mut frag, mut matched, mut gt_count) = (0, 0, 0, 0, 0, 0);
    let mut iou_sum = 0.0;
    let mut last_match: BTreeMap<u64, u64> = BTreeMap::new();
    let mut previous: BTreeMap<u64, u64> = BTreeMap::new();
    // Per gt id: (frames present, frames tracked, tracked in its last present frame).
    let mut coverage: BTreeMap<u64, (usize, usize, bool)> = BTreeMap::new();
    // (gt id, pred id) -> frames matched at the IoU threshold, for IDF1.
    let mut overlap: BTreeMap<(u64, u64), usize> = BTreeMap::new();
    let empty = Vec::new();
    let mut total_pred = 0;

    for f in frames {
        let g = gt.get(&f).unwrap_or(&empty);
        let p = preds.get(&f).unwrap_or(&empty);
        gt_count += g.len();
        total_pred += p.len();
        for (gid, gb) in g {
            for (pid, pb) in p {
                if gb.iou(pb) >= cfg.iou_threshold {
                    *overlap.entry((*gid, *pid)).or_default() += 1;
                }
            }
        }
        let pairs = match_frame(g, p, &previous, cfg.iou_threshold)?;
        let mut current = BTreeMap::new();
        let mut tracked = BTreeSet::new();
        for &(gi, pi) in &pairs {
            let (gid, pid) = (g[gi].0, p[pi].0);
            iou_sum += g[gi].1.iou(&p[pi].1);
            if last_match.get(&gid).is_some_and(|&q| q != pid) {
                idsw += 1;
            }
            last_match.insert(gid, pid);
            current.insert(gid, pid);
            tracked.insert(gid);
        }
        for (gid, _) in g {
            let is_tracked = tracked.contains(gid);
            let e = coverage.entry(*gid).or_insert((0, 0, false));
            if is_tracked && !e.2 && e.1 > 0 {
                frag += 1;
            }
            e.0 += 1;
            e.1 += usize::from(is_tracked);
            e.2 = is_tracked;
        }
        matched += pairs.len();
        fp += p.len() - pairs.len();
        fneg += g.len() - pairs.len();
        previous = current;
    }

    let gt_ids: Vec<u64> = coverage.keys().copied().collect();
    let pred_ids: Vec<u64> = overlap
        .keys()
        .map(|&(_, p)| p)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let idtp = if gt_ids.is_empty() || pred_ids.is_empty() {
        0.0
    } else {
        let mut m = Tensor::zeros(gt_ids.len(), pred_ids.len());
        for (a, g) in gt_ids.iter().enumerate() {
            for (b, p) in pred_ids.iter().enumerate() {
                m.set(a, b, overlap.get(&(*g, *p)).copied().unwrap_or(0) as f64);
            }
        }
        hungarian(&m)?.objective
    };
    let denom = (gt_count + total_pred) as f64;
    let n_tracks = gt_ids.len();
    let ratio = |pred: &dyn Fn(f64) -> bool| {
        if n_tracks == 0 {
            return 0.0;
        }
        coverage
            .values()
            .filter(|(present, hit, _)| pred(*hit as f64 / *present as f64))
            .count() as f64
            / n_tracks as f64
    };
    Ok(MetricsReport {
        mota: 1.0 - (fneg + fp + idsw) as f64 / gt_count.max(1) as f64,
        motp: if matched == 0 { 0.0 } else { iou_sum / matched as f64 },
        idf1: if denom == 0.0 { 0.0 } else { 2.0 * idtp / denom },
        id_switches: idsw,
        mostly_tracked: ratio(&|c| c >= cfg.mostly_tracked),
        mostly_lost: ratio(&|c| c <= cfg.mostly_lost),
        fragmentations: frag,
        false_positives: fp,
        false_negatives: fneg,
        gt_count,
        matches: matched,
        gt_tracks: n_tracks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx(x: f64) -> BoundingBox {
        BoundingBox::new(x, 0.0, 0.1, 0.1).unwrap()
    }

    fn two_tracks(frames: usize) -> GroundTruth {
        (0..frames)
            .map(|f| (f, vec![(1, bx(0.0)), (2, bx(0.5))]))
            .collect()
    }

    fn rec(frame: usize, id: u64, b: BoundingBox) -> TrackRecord {
        TrackRecord { frame, id, bbox: b }
    }

    #[test]
    fn perfect_tracking() {
        let gt = two_tracks(5);
        let tracks: Vec<_> = gt
            .iter()
            .flat_map(|(&f, objs)| objs.iter().map(move |&(id, b)| rec(f, id + 10, b)))
            .collect();
        let r = evaluate(&tracks, &gt, &MetricsConfig::default()).unwrap();
        assert_eq!(r.mota, 1.0);
        assert_eq!(r.id_switches, 0);
        assert_eq!(r.mostly_tracked, 1.0);
        assert_eq!(r.idf1, 1.0);
        assert!((r.motp - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_predictions() {
        let gt = two_tracks(4);
        let r = evaluate(&[], &gt, &MetricsConfig::default()).unwrap();
        assert_eq!(r.false_negatives, r.gt_count);
        assert_eq!(r.mota, 0.0);
        assert_eq!(r.mostly_lost, 1.0);
    }

    #[test]
    fn single_swap_counts_two_switches() {
        let gt = two_tracks(4);
        let mut tracks = Vec::new();
        for f in 0..4 {
            let (a, b) = if f < 2 { (1, 2) } else { (2, 1) };
            tracks.push(rec(f, a, bx(0.0)));
            tracks.push(rec(f, b, bx(0.5)));
        }
        let r = evaluate(&tracks, &gt, &MetricsConfig::default()).unwrap();
        assert_eq!(r.id_switches, 2);
        assert_eq!(r.mota, 1.0 - 2.0 / 8.0);
        assert_eq!(r.fragmentations, 0);
    }

    #[test]
    fn fragmentation_counts_reacquisitions() {
        let gt: GroundTruth = (0..5).map(|f| (f, vec![(1, bx(0.0))])).collect();
        let tracks = vec![rec(0, 1, bx(0.0)), rec(1, 1, bx(0.0)), rec(3, 1, bx(0.0))];
        let r = evaluate(&tracks, &gt, &MetricsConfig::default()).unwrap();
        assert_eq!(r.fragmentations, 1);
        assert_eq!(r.false_negatives, 2);
        assert_eq!(r.id_switches, 0);
    }

    #[test]
    fn counts_balance_per_frame() {
        let gt = two_tracks(3);
        let tracks = vec![rec(0, 1, bx(0.0)), rec(0, 2, bx(0.8)), rec(1, 1, bx(0.02))];
        let r = evaluate(&tracks, &gt, &MetricsConfig::default()).unwrap();
        assert_eq!(r.false_positives + r.matches, tracks.len());
        assert_eq!(r.false_negatives + r.matches, r.gt_count);
    }

    #[test]
    fn duplicate_ids_in_a_frame_are_rejected() {
        let gt = two_tracks(1);
        let tracks = vec![rec(0, 1, bx(0.0)), rec(0, 1, bx(0.5))];
        assert!(evaluate(&tracks, &gt, &MetricsConfig::default()).is_err());
    }
}
