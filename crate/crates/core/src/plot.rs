//! PNG overlays of tracks on frames and a training-loss curve.

use std::path::Path;

use image::{Rgb, RgbImage};

use crate::assoc::BoundingBox;
use crate::error::{Error, Result};
use crate::scenario::FrameRecord;
use crate::tracker::TrackRecord;
use crate::train::HistoryRow;

const WHITE: Rgb<u8> = Rgb([255, 255, 255]);
const GREY: Rgb<u8> = Rgb([190, 190, 190]);
const BLACK: Rgb<u8> = Rgb([0, 0, 0]);

/// 3x5 digit glyphs, one row per `u8`, high three bits used.
const DIGITS: [[u8; 5]; 10] = [
    [0b111, 0b101, 0b101, 0b101, 0b111],
    [0b010, 0b110, 0b010, 0b010, 0b111],
    [0b111, 0b001, 0b111, 0b100, 0b111],
    [0b111, 0b001, 0b111, 0b001, 0b111],
    [0b101, 0b101, 0b111, 0b001, 0b001],
    [0b111, 0b100, 0b111, 0b001, 0b111],
    [0b111, 0b100, 0b111, 0b101, 0b111],
    [0b111, 0b001, 0b010, 0b010, 0b010],
    [0b111, 0b101, 0b111, 0b101, 0b111],
    [0b111, 0b101, 0b111, 0b001, 0b111],
];

/// Saturated colour per identity, hue spread by the golden ratio.
pub fn id_colour(id: u64) -> Rgb<u8> {
    let hue = (id as f64 * 0.618_033_988_75).fract() * 6.0;
    let x = 1.0 - (hue % 2.0 - 1.0).abs();
    let (r, g, b) = match hue as u32 {
        0 => (1.0, x, 0.0),
        1 => (x, 1.0, 0.0),
        2 => (0.0, 1.0, x),
        3 => (0.0, x, 1.0),
        4 => (x, 0.0, 1.0),
        _ => (1.0, 0.0, x),
    };
    let c = |v: f64| (30.0 + 180.0 * v) as u8;
    Rgb([c(r), c(g), c(b)])
}

fn put(img: &mut RgbImage, x: i64, y: i64, c: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, c);
    }
}

fn rect(img: &mut RgbImage, x0: i64, y0: i64, x1: i64, y1: i64, c: Rgb<u8>) {
    for x in x0..=x1 {
        put(img, x, y0, c);
        put(img, x, y1, c);
    }
    for y in y0..=y1 {
        put(img, x0, y, c);
        put(img, x1, y, c);
    }
}

fn line(img: &mut RgbImage, (x0, y0): (i64, i64), (x1, y1): (i64, i64), c: Rgb<u8>) {
    let steps = (x1 - x0).abs().max((y1 - y0).abs()).max(1);
    for s in 0..=steps {
        let t = s as f64 / steps as f64;
        let x = x0 as f64 + t * (x1 - x0) as f64;
        let y = y0 as f64 + t * (y1 - y0) as f64;
        put(img, x.round() as i64, y.round() as i64, c);
    }
}

/// Draws `n` in the bitmap font with its top-left at `(x, y)`, scaled by 2.
pub fn draw_number(img: &mut RgbImage, x: i64, y: i64, n: u64, c: Rgb<u8>) {
    for (k, ch) in n.to_string().bytes().enumerate() {
        let glyph = DIGITS[(ch - b'0') as usize];
        let ox = x + 8 * k as i64;
        for (row, bits) in glyph.iter().enumerate() {
            for col in 0..3 {
                if bits & (0b100 >> col) != 0 {
                    for (dx, dy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                        put(img, ox + 2 * col + dx, y + 2 * row as i64 + dy, c);
                    }
                }
            }
        }
    }
}

fn to_pixels(b: &BoundingBox, arena: [f64; 2], size: u32) -> (i64, i64, i64, i64) {
    let sx = f64::from(size) / arena[0];
    let sy = f64::from(size) / arena[1];
    (
        (b.x * sx).round() as i64,
        (b.y * sy).round() as i64,
        ((b.x + b.w) * sx).round() as i64,
        ((b.y + b.h) * sy).round() as i64,
    )
}

/// Detections in grey, tracks in per-id colours with their id above the box.
pub fn render_frame(
    frame: &FrameRecord,
    tracks: &[TrackRecord],
    arena: [f64; 2],
    size: u32,
) -> RgbImage {
    let mut img = RgbImage::from_pixel(size, size, WHITE);
    for d in &frame.detections {
        let (x0, y0, x1, y1) = to_pixels(&d.bbox, arena, size);
        rect(&mut img, x0, y0, x1, y1, GREY);
    }
    for t in tracks.iter().filter(|t| t.frame == frame.frame) {
        let c = id_colour(t.id);
        let (x0, y0, x1, y1) = to_pixels(&t.bbox, arena, size);
        rect(&mut img, x0, y0, x1, y1, c);
        rect(&mut img, x0 + 1, y0 + 1, x1 - 1, y1 - 1, c);
        draw_number(&mut img, x0, y0 - 12, t.id, c);
    }
    draw_number(&mut img, 4, 4, frame.frame as u64, BLACK);
    img
}

fn save(img: &RgbImage, path: &Path) -> Result<()> {
    img.save(path)
        .map_err(|e| Error::Image(format!("{}: {e}", path.display())))
}

/// Writes `frame_NNNN.png` for every frame; returns the number written.
pub fn write_overlays(
    dir: impl AsRef<Path>,
    frames: &[FrameRecord],
    tracks: &[TrackRecord],
    arena: [f64; 2],
    size: u32,
) -> Result<usize> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    for f in frames {
        let img = render_frame(f, tracks, arena, size);
        save(&img, &dir.join(format!("frame_{:04}.png", f.frame)))?;
    }
    Ok(frames.len())
}

/// Trailing mean over `window` points.
fn smooth(values: &[f64], window: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    for (k, v) in values.iter().enumerate() {
        acc += v;
        if k >= window {
            acc -= values[k - window];
        }
        out.push(acc / (k + 1).min(window) as f64);
    }
    out
}

/// Total loss (red) and the output's matrix loss (blue) against iteration on
/// a log scale. Raw values are drawn faint, a moving average on top.
pub fn render_loss_curve(history: &[HistoryRow], width: u32, height: u32) -> Result<RgbImage> {
    if history.is_empty() {
        return Err(Error::invalid("empty loss history"));
    }
    let mut img = RgbImage::from_pixel(width, height, WHITE);
    let margin = 20i64;
    let (w, h) = (width as i64 - 2 * margin, height as i64 - 2 * margin);
    if w <= 1 || h <= 1 {
        return Err(Error::invalid("image too small for a plot"));
    }
    let logs = |v: f64| v.max(1e-12).log10();
    let total: Vec<f64> = history.iter().map(|r| r.loss.total).collect();
    let matrix: Vec<f64> = history.iter().map(|r| r.loss.association).collect();
    let (lo, hi) = total
        .iter()
        .chain(&matrix)
        .map(|&v| logs(v))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let span = (hi - lo).max(1e-9);
    let n = history.len().max(2) - 1;
    let point = |k: usize, v: f64| {
        (
            margin + (k as f64 / n as f64 * w as f64).round() as i64,
            margin + h - ((logs(v) - lo) / span * h as f64).round() as i64,
        )
    };
    line(&mut img, (margin, margin), (margin, margin + h), BLACK);
    line(&mut img, (margin, margin + h), (margin + w, margin + h), BLACK);
    let window = (history.len() / 50).max(1);
    let series = [
        (&matrix, Rgb([190, 200, 235]), Rgb([30, 60, 200])),
        (&total, Rgb([240, 190, 190]), Rgb([200, 30, 30])),
    ];
    for (values, faint, _) in &series {
        if window > 1 {
            polyline(&mut img, values.iter().enumerate().map(|(k, &v)| point(k, v)), *faint);
        }
    }
    for (values, _, strong) in &series {
        let s = smooth(values, window);
        polyline(&mut img, s.iter().enumerate().map(|(k, &v)| point(k, v)), *strong);
    }
    Ok(img)
}

fn polyline(img: &mut RgbImage, points: impl Iterator<Item = (i64, i64)>, c: Rgb<u8>) {
    let pts: Vec<_> = points.collect();
    for pair in pts.windows(2) {
        line(img, pair[0], pair[1], c);
    }
}

pub fn write_loss_curve(path: impl AsRef<Path>, history: &[HistoryRow]) -> Result<()> {
    save(&render_loss_curve(history, 640, 400)?, path.as_ref())
}
