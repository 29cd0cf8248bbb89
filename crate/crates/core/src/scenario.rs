//! Seeded synthetic multi-object scenes.
//!
//! # Random source
//!
//! All randomness comes from one `ChaCha8Rng` seeded with
//! `seed_from_u64(config.seed)` (rand_chacha 0.3). Uniform draws use
//! `Rng::gen::<f64>()` and `Rng::gen_range`; Gaussian draws use the basic
//! Box–Muller transform on two uniforms, `sqrt(-2 ln(1-u1)) cos(2π u2)`,
//! returning only the cosine branch. Draws happen in this fixed order:
//!
//! 1. initial object count, then each initial object as in *spawn*;
//! 2. for every frame after the first: per object (in list order) the x and
//!    y motion noise, then one death uniform per object, then one
//!    birth uniform and, if it fires, a spawn;
//! 3. per frame, per object in order: one miss uniform, and if detected,
//!    four box-jitter normals and `descriptor_dim` descriptor normals;
//! 4. per frame, per object: one clutter uniform, and if it fires, a clutter
//!    box (x, y, w, h uniforms) and `descriptor_dim` normals.
//!
//! *Spawn* draws the centre (x, y), a heading, a speed factor, the width,
//! the height, and `descriptor_dim` latent normals, in that order.
//!
//! # Sequence file
//!
//! Newline-delimited JSON, one [`FrameRecord`] per line:
//!
//! ```text
//! {"frame":0,
//!  "gt":[{"id":1,"box":[x,y,w,h],"descriptor":[...]}, ...],
//!  "detections":[{"box":[x,y,w,h],"descriptor":[...],"clutter":false,"gt_id":1}, ...],
//!  "matches":[[i,j], ...]}
//! ```
//!
//! `matches` pairs index `i` of the previous frame's detections with index
//! `j` of this frame's detections when both come from the same object.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assoc::{
    build_ground_truth, BoundingBox, Detection, GroundTruthMatrix, TrackObservation, Tracklet,
};
use crate::error::{Error, Result};

const MIN_SIZE: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub arena: [f64; 2],
    pub min_objects: usize,
    pub max_objects: usize,
    /// Mean speed in arena units per frame.
    pub velocity_scale: f64,
    /// Per-frame positional perturbation σ_m.
    pub motion_noise: f64,
    pub birth_prob: f64,
    pub death_prob: f64,
    pub descriptor_dim: usize,
    /// Spread of the per-identity latent descriptors.
    pub latent_scale: f64,
    /// Per-frame descriptor noise σ_a.
    pub descriptor_noise: f64,
    /// Detection box jitter σ, applied to all four coordinates.
    pub box_jitter: f64,
    /// Expected clutter detections per object per frame.
    pub clutter_rate: f64,
    pub miss_rate: f64,
    pub box_width: [f64; 2],
    pub box_height: [f64; 2],
    pub length: usize,
    pub fps: f64,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            arena: [1.0, 1.0],
            min_objects: 4,
            max_objects: 10,
            velocity_scale: 0.005,
            motion_noise: 0.005,
            birth_prob: 0.02,
            death_prob: 0.02,
            descriptor_dim: 16,
            latent_scale: 1.0,
            descriptor_noise: 0.8,
            box_jitter: 0.01,
            clutter_rate: 0.05,
            miss_rate: 0.05,
            box_width: [0.04, 0.1],
            box_height: [0.08, 0.2],
            length: 100,
            fps: 10.0,
            seed: 7,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let prob = |name: &str, p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(Error::invalid(format!("scenario.{name} must lie in [0, 1]")))
            }
        };
        prob("birth_prob", self.birth_prob)?;
        prob("death_prob", self.death_prob)?;
        prob("clutter_rate", self.clutter_rate)?;
        prob("miss_rate", self.miss_rate)?;
        for (name, v) in [
            ("velocity_scale", self.velocity_scale),
            ("motion_noise", self.motion_noise),
            ("latent_scale", self.latent_scale),
            ("descriptor_noise", self.descriptor_noise),
            ("box_jitter", self.box_jitter),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!("scenario.{name} must be non-negative")));
            }
        }
        if !self.arena.iter().all(|v| v.is_finite() && *v > 0.0) {
            return Err(Error::invalid("scenario.arena must be positive"));
        }
        if self.min_objects > self.max_objects {
            return Err(Error::invalid("scenario.min_objects exceeds max_objects"));
        }
        for (name, r) in [("box_width", self.box_width), ("box_height", self.box_height)] {
            if !(r[0].is_finite() && r[0] > 0.0 && r[1] >= r[0]) {
                return Err(Error::invalid(format!("scenario.{name} must be a positive range")));
            }
        }
        if self.descriptor_dim == 0 {
            return Err(Error::invalid("scenario.descriptor_dim must be positive"));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(Error::invalid("scenario.fps must be positive"));
        }
        Ok(())
    }

    /// No noise, clutter, misses, births, or deaths.
    pub fn noiseless(mut self) -> Self {
        self.motion_noise = 0.0;
        self.descriptor_noise = 0.0;
        self.box_jitter = 0.0;
        self.clutter_rate = 0.0;
        self.miss_rate = 0.0;
        self.birth_prob = 0.0;
        self.death_prob = 0.0;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GtObject {
    pub id: u64,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub descriptor: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameDetection {
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub descriptor: Vec<f64>,
    pub clutter: bool,
    pub gt_id: Option<u64>,
}

impl FrameDetection {
    pub fn to_detection(&self) -> Detection {
        Detection {
            bbox: self.bbox,
            descriptor: self.descriptor.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame: usize,
    pub gt: Vec<GtObject>,
    pub detections: Vec<FrameDetection>,
    pub matches: Vec<(usize, usize)>,
}

impl FrameRecord {
    pub fn detections(&self) -> Vec<Detection> {
        self.detections.iter().map(FrameDetection::to_detection).collect()
    }
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen();
    let u2: f64 = rng.gen();
    (-2.0 * (1.0 - u1).ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

struct Object {
    id: u64,
    cx: f64,
    cy: f64,
    vx: f64,
    vy: f64,
    w: f64,
    h: f64,
    latent: Vec<f64>,
}

impl Object {
    fn bbox(&self) -> BoundingBox {
        BoundingBox {
            x: self.cx - 0.5 * self.w,
            y: self.cy - 0.5 * self.h,
            w: self.w,
            h: self.h,
        }
    }
}

fn uniform_in<R: Rng>(rng: &mut R, range: [f64; 2]) -> f64 {
    range[0] + (range[1] - range[0]) * rng.gen::<f64>()
}

fn spawn<R: Rng>(rng: &mut R, cfg: &ScenarioConfig, id: u64) -> Object {
    let cx = cfg.arena[0] * rng.gen::<f64>();
    let cy = cfg.arena[1] * rng.gen::<f64>();
    let heading = std::f64::consts::TAU * rng.gen::<f64>();
    let speed = cfg.velocity_scale * (0.5 + rng.gen::<f64>());
    let w = uniform_in(rng, cfg.box_width);
    let h = uniform_in(rng, cfg.box_height);
    let latent = (0..cfg.descriptor_dim)
        .map(|_| cfg.latent_scale * normal(rng))
        .collect();
    Object {
        id,
        cx,
        cy,
        vx: speed * heading.cos(),
        vy: speed * heading.sin(),
        w,
        h,
        latent,
    }
}

fn inside(cfg: &ScenarioConfig, o: &Object) -> bool {
    (0.0..=cfg.arena[0]).contains(&o.cx) && (0.0..=cfg.arena[1]).contains(&o.cy)
}

/// Generates a full sequence; identical configs give identical output.
pub fn generate_sequence(cfg: &ScenarioConfig) -> Result<Vec<FrameRecord>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut next_id = 1u64;
    let n0 = rng.gen_range(cfg.min_objects..=cfg.max_objects);
    let mut objects: Vec<Object> = (0..n0)
        .map(|_| {
            let o = spawn(&mut rng, cfg, next_id);
            next_id += 1;
            o
        })
        .collect();

    let mut frames: Vec<FrameRecord> = Vec::with_capacity(cfg.length);
    for t in 0..cfg.length {
        if t > 0 {
            for o in &mut objects {
                o.cx += o.vx + cfg.motion_noise * normal(&mut rng);
                o.cy += o.vy + cfg.motion_noise * normal(&mut rng);
            }
            objects.retain(|o| {
                let dies = rng.gen::<f64>() < cfg.death_prob;
                !dies && inside(cfg, o)
            });
            if rng.gen::<f64>() < cfg.birth_prob {
                objects.push(spawn(&mut rng, cfg, next_id));
                next_id += 1;
            }
        }

        let gt: Vec<GtObject> = objects
            .iter()
            .map(|o| GtObject {
                id: o.id,
                bbox: o.bbox(),
                descriptor: o.latent.clone(),
            })
            .collect();

        let mut detections = Vec::new();
        for o in &objects {
            if rng.gen::<f64>() < cfg.miss_rate {
                continue;
            }
            let b = o.bbox();
            let mut jitter = [0.0; 4];
            jitter.iter_mut().for_each(|j| *j = cfg.box_jitter * normal(&mut rng));
            let bbox = BoundingBox {
                x: b.x + jitter[0],
                y: b.y + jitter[1],
                w: (b.w + jitter[2]).max(MIN_SIZE),
                h: (b.h + jitter[3]).max(MIN_SIZE),
            };
            let descriptor = o
                .latent
                .iter()
                .map(|v| v + cfg.descriptor_noise * normal(&mut rng))
                .collect();
            detections.push(FrameDetection {
                bbox,
                descriptor,
                clutter: false,
                gt_id: Some(o.id),
            });
        }
        for _ in 0..objects.len() {
            if rng.gen::<f64>() >= cfg.clutter_rate {
                continue;
            }
            let x = cfg.arena[0] * rng.gen::<f64>();
            let y = cfg.arena[1] * rng.gen::<f64>();
            let w = uniform_in(&mut rng, cfg.box_width);
            let h = uniform_in(&mut rng, cfg.box_height);
            let descriptor = (0..cfg.descriptor_dim)
                .map(|_| cfg.latent_scale * normal(&mut rng))
                .collect();
            detections.push(FrameDetection {
                bbox: BoundingBox { x, y, w, h },
                descriptor,
                clutter: true,
                gt_id: None,
            });
        }

        let matches = match frames.last() {
            Some(prev) => match_by_identity(&prev.detections, &detections),
            None => Vec::new(),
        };
        frames.push(FrameRecord {
            frame: t,
            gt,
            detections,
            matches,
        });
    }
    Ok(frames)
}

fn match_by_identity(prev: &[FrameDetection], cur: &[FrameDetection]) -> Vec<(usize, usize)> {
    let index: BTreeMap<u64, usize> = cur
        .iter()
        .enumerate()
        .filter_map(|(j, d)| d.gt_id.map(|g| (g, j)))
        .collect();
    prev.iter()
        .enumerate()
        .filter_map(|(i, d)| d.gt_id.and_then(|g| index.get(&g).map(|&j| (i, j))))
        .collect()
}

pub fn write_sequence(path: impl AsRef<Path>, frames: &[FrameRecord]) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    for f in frames {
        serde_json::to_writer(&mut out, f)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_sequence(path: impl AsRef<Path>) -> Result<Vec<FrameRecord>> {
    let path = path.as_ref();
    let reader = BufReader::new(fs::File::open(path)?);
    let mut frames = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message,
        };
        let rec: FrameRecord =
            serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        validate_record(&rec, frames.last()).map_err(|e| parse_err(e.to_string()))?;
        frames.push(rec);
    }
    Ok(frames)
}

fn validate_record(rec: &FrameRecord, prev: Option<&FrameRecord>) -> Result<()> {
    let prev_len = prev.map_or(0, |p| p.detections.len());
    build_ground_truth(&rec.matches, prev_len, rec.detections.len())?;
    for &(_, j) in &rec.matches {
        if rec.detections[j].clutter {
            return Err(Error::invalid(format!("clutter detection {j} has a match")));
        }
    }
    Ok(())
}

/// One supervised association instance between consecutive frames.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingInstance {
    pub frame: usize,
    pub tracks: Vec<TrackObservation>,
    pub detections: Vec<Detection>,
    pub ground_truth: GroundTruthMatrix,
}

/// Builds one instance per consecutive frame pair with detections on both
/// sides. Trajectories are the previous frame's detections; each carries the
/// last `tracklet_len` detected boxes of its identity (clutter gets a
/// one-box history). Returns the instances and the number of skipped pairs.
pub fn to_training_problems(
    frames: &[FrameRecord],
    tracklet_len: usize,
) -> Result<(Vec<TrainingInstance>, usize)> {
    let mut history: BTreeMap<u64, Vec<BoundingBox>> = BTreeMap::new();
    let mut out = Vec::new();
    let mut skipped = 0;
    for (k, rec) in frames.iter().enumerate() {
        if k > 0 {
            let prev = &frames[k - 1];
            if prev.detections.is_empty() || rec.detections.is_empty() {
                skipped += 1;
            } else {
                let tracks = prev
                    .detections
                    .iter()
                    .map(|d| {
                        let boxes = d
                            .gt_id
                            .and_then(|g| history.get(&g))
                            .map_or_else(|| vec![d.bbox], Clone::clone);
                        Ok(TrackObservation {
                            tracklet: Tracklet::from_history(&boxes, tracklet_len)?,
                            descriptor: d.descriptor.clone(),
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                let ground_truth =
                    build_ground_truth(&rec.matches, prev.detections.len(), rec.detections.len())?;
                out.push(TrainingInstance {
                    frame: rec.frame,
                    tracks,
                    detections: rec.detections(),
                    ground_truth,
                });
            }
        }
        for d in &rec.detections {
            if let Some(g) = d.gt_id {
                let h = history.entry(g).or_default();
                h.push(d.bbox);
                if h.len() > tracklet_len {
                    h.remove(0);
                }
            }
        }
    }
    Ok((out, skipped))
}

/// Training instances from several seeded sequences: seeds `base, base+1, ...`.
pub fn training_set(
    cfg: &ScenarioConfig,
    sequences: usize,
    tracklet_len: usize,
) -> Result<Vec<TrainingInstance>> {
    let mut all = Vec::new();
    for s in 0..sequences {
        let c = ScenarioConfig {
            seed: cfg.seed.wrapping_add(s as u64),
            ..cfg.clone()
        };
        let (mut inst, _) = to_training_problems(&generate_sequence(&c)?, tracklet_len)?;
        all.append(&mut inst);
    }
    Ok(all)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_sequence() {
        let cfg = ScenarioConfig {
            length: 30,
            ..Default::default()
        };
        assert_eq!(generate_sequence(&cfg).unwrap(), generate_sequence(&cfg).unwrap());
        let other = ScenarioConfig { seed: 8, ..cfg.clone() };
        assert_ne!(generate_sequence(&cfg).unwrap(), generate_sequence(&other).unwrap());
    }

    #[test]
    fn noiseless_matches_are_identity() {
        let cfg = ScenarioConfig {
            length: 20,
            velocity_scale: 0.0,
            ..Default::default()
        }
        .noiseless();
        let frames = generate_sequence(&cfg).unwrap();
        for f in &frames[1..] {
            let n = f.detections.len();
            assert_eq!(f.matches, (0..n).map(|i| (i, i)).collect::<Vec<_>>());
        }
    }

    #[test]
    fn birth_frequency_matches_probability() {
        let p = 0.1;
        let (mut births, mut trials) = (0usize, 0usize);
        for seed in 0..100 {
            let cfg = ScenarioConfig {
                birth_prob: p,
                length: 50,
                seed,
                ..Default::default()
            };
            let frames = generate_sequence(&cfg).unwrap();
            let mut max_id = frames[0].gt.iter().map(|g| g.id).max().unwrap_or(0);
            for f in &frames[1..] {
                trials += 1;
                let m = f.gt.iter().map(|g| g.id).max().unwrap_or(0);
                if m > max_id {
                    births += 1;
                    max_id = m;
                }
            }
        }
        let freq = births as f64 / trials as f64;
        let se = (p * (1.0 - p) / trials as f64).sqrt();
        assert!((freq - p).abs() < 3.0 * se, "freq {freq}, se {se}");
    }

    #[test]
    fn clutter_never_matches_and_boxes_are_finite() {
        let cfg = ScenarioConfig {
            clutter_rate: 0.5,
            ..Default::default()
        };
        let frames = generate_sequence(&cfg).unwrap();
        for f in &frames {
            for &(_, j) in &f.matches {
                assert!(!f.detections[j].clutter);
            }
            assert!(f.detections.iter().all(|d| d.bbox.validate().is_ok()));
        }
    }

    #[test]
    fn training_instances_cover_eligible_pairs() {
        let frames = generate_sequence(&ScenarioConfig::default()).unwrap();
        let (inst, skipped) = to_training_problems(&frames, 5).unwrap();
        let eligible = frames
            .windows(2)
            .filter(|w| !w[0].detections.is_empty() && !w[1].detections.is_empty())
            .count();
        assert_eq!(inst.len(), eligible);
        assert_eq!(inst.len() + skipped, frames.len() - 1);
        for i in &inst {
            assert!(i.tracks.iter().all(|t| t.tracklet.len() == 5));
            assert_eq!(i.ground_truth.rows(), i.tracks.len());
        }
    }

    #[test]
    fn file_round_trip_and_line_numbers() {
        let cfg = ScenarioConfig {
            length: 5,
            ..Default::default()
        };
        let frames = generate_sequence(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("seq.jsonl");
        write_sequence(&path, &frames).unwrap();
        assert_eq!(read_sequence(&path).unwrap(), frames);

        let mut text = fs::read_to_string(&path).unwrap();
        text.push_str("{\"frame\": 5, \"gt\": oops}\n");
        fs::write(&path, text).unwrap();
        match read_sequence(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 6),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn invalid_config_is_rejected() {
        let cfg = ScenarioConfig {
            miss_rate: 1.5,
            ..Default::default()
        };
        assert!(generate_sequence(&cfg).is_err());
    }
}
