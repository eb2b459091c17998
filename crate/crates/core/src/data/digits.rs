//! Procedural handwritten-style digits on a 28x28 canvas.
//!
//! Each class is a fixed set of strokes in a unit box; every sample applies
//! a random affine jitter, per-point wobble and stroke width, then renders
//! with an anti-aliased distance-to-segment rule. The glyph occupies roughly
//! the central 20x20 pixels and never reaches the outer 2-pixel frame.

use std::f32::consts::PI;

use rand::Rng as _;

use crate::data::ImageSample;
use crate::error::Result;
use crate::seed::{self, Rng};
use crate::tensor::Tensor;

pub const CANVAS: usize = 28;
const GLYPH_PX: f32 = 16.0;

type Stroke = Vec<(f32, f32)>;

fn arc(cx: f32, cy: f32, rx: f32, ry: f32, from_deg: f32, to_deg: f32) -> Stroke {
    let steps = (((to_deg - from_deg).abs() / 15.0).ceil() as usize).max(2);
    (0..=steps)
        .map(|i| {
            let t = (from_deg + (to_deg - from_deg) * i as f32 / steps as f32) * PI / 180.0;
            (cx + rx * t.cos(), cy + ry * t.sin())
        })
        .collect()
}

/// Strokes for each class in unit coordinates, y pointing down.
fn template(class: usize) -> Vec<Stroke> {
    match class {
        0 => vec![arc(0.5, 0.5, 0.28, 0.44, 0.0, 360.0)],
        1 => vec![vec![(0.35, 0.2), (0.52, 0.05), (0.52, 0.95)]],
        2 => {
            let mut s = arc(0.5, 0.3, 0.27, 0.25, 190.0, 390.0);
            s.extend([(0.18, 0.95), (0.85, 0.95)]);
            vec![s]
        }
        3 => vec![
            arc(0.48, 0.28, 0.25, 0.23, -160.0, 90.0),
            arc(0.48, 0.73, 0.28, 0.22, -90.0, 160.0),
        ],
        4 => vec![vec![(0.65, 0.95), (0.65, 0.05), (0.15, 0.68), (0.88, 0.68)]],
        5 => {
            let mut s = vec![(0.78, 0.05), (0.3, 0.05), (0.26, 0.45)];
            s.extend(arc(0.5, 0.68, 0.28, 0.26, -125.0, 150.0));
            vec![s]
        }
        6 => vec![
            vec![(0.72, 0.05), (0.45, 0.22), (0.3, 0.48), (0.25, 0.72)],
            arc(0.5, 0.72, 0.25, 0.23, 0.0, 360.0),
        ],
        7 => vec![vec![(0.15, 0.05), (0.85, 0.05), (0.42, 0.95)]],
        8 => vec![
            arc(0.5, 0.26, 0.21, 0.21, 0.0, 360.0),
            arc(0.5, 0.71, 0.26, 0.24, 0.0, 360.0),
        ],
        9 => vec![
            arc(0.5, 0.3, 0.24, 0.24, 0.0, 360.0),
            vec![(0.74, 0.3), (0.7, 0.6), (0.6, 0.95)],
        ],
        _ => unreachable!("digit classes are 0..9"),
    }
}

fn segment_distance(p: (f32, f32), a: (f32, f32), b: (f32, f32)) -> f32 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (qx, qy) = (a.0 + t * dx - p.0, a.1 + t * dy - p.1);
    (qx * qx + qy * qy).sqrt()
}

/// Renders one jittered digit of `class` as a `(1,28,28)` tensor.
pub fn render_digit(class: usize, rng: &mut Rng) -> Tensor {
    let angle = rng.gen_range(-0.15f32..0.15);
    let shear = rng.gen_range(-0.15f32..0.15);
    let sx = rng.gen_range(0.75f32..1.0);
    let sy = rng.gen_range(0.85f32..1.05);
    let tx = rng.gen_range(-0.04f32..0.04);
    let ty = rng.gen_range(-0.04f32..0.04);
    let radius = rng.gen_range(1.0f32..1.8);
    let ink = rng.gen_range(0.85f32..1.0);
    let (sin, cos) = angle.sin_cos();
    let centre = CANVAS as f32 / 2.0;

    let mut segments = Vec::new();
    for stroke in template(class) {
        let pts: Vec<(f32, f32)> = stroke
            .into_iter()
            .map(|(x, y)| {
                let x = x + rng.gen_range(-0.03f32..0.03) - 0.5;
                let y = y + rng.gen_range(-0.03f32..0.03) - 0.5;
                let (x, y) = (sx * (x + shear * y), sy * y);
                let (x, y) = (cos * x - sin * y + tx, sin * x + cos * y + ty);
                (centre + GLYPH_PX * x, centre + GLYPH_PX * y)
            })
            .collect();
        segments.extend(pts.windows(2).map(|w| (w[0], w[1])));
    }

    let mut data = vec![0.0f32; CANVAS * CANVAS];
    for (i, v) in data.iter_mut().enumerate() {
        let p = ((i % CANVAS) as f32 + 0.5, (i / CANVAS) as f32 + 0.5);
        let d = segments
            .iter()
            .map(|&(a, b)| segment_distance(p, a, b))
            .fold(f32::INFINITY, f32::min);
        *v = ink * (radius + 0.5 - d).clamp(0.0, 1.0);
    }
    Tensor::new(vec![1, CANVAS, CANVAS], data).expect("canvas shape")
}

/// `n` digits with uniformly random labels.
pub fn render_digits(n: usize, seed: u64) -> Result<Vec<ImageSample>> {
    let mut rng = seed::rng_for(seed, seed::stream::DATA);
    (0..n)
        .map(|_| {
            let label = rng.gen_range(0..10);
            ImageSample::new(render_digit(label, &mut rng), label, Vec::new())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_in_range_and_centred() {
        let a = render_digits(40, 3).unwrap();
        assert_eq!(a, render_digits(40, 3).unwrap());
        assert_ne!(a, render_digits(40, 4).unwrap());
        for s in &a {
            assert!(s.label < 10);
            let px = s.pixels.data();
            assert!(px.iter().all(|v| (0.0..=1.0).contains(v)));
            assert!(s.pixels.sum() > 20.0, "digit {} too faint", s.label);
            // Nothing within 2 px of the border, so 24x24 crops are lossless.
            for (i, &v) in px.iter().enumerate() {
                let (x, y) = (i % CANVAS, i / CANVAS);
                if x < 2 || y < 2 || x >= 26 || y >= 26 {
                    assert_eq!(v, 0.0, "ink at ({x},{y})");
                }
            }
        }
    }

    #[test]
    fn classes_differ() {
        let mut rng = seed::rng_for(0, 0);
        let one = render_digit(1, &mut rng);
        let zero = render_digit(0, &mut rng);
        // The centre of a zero is empty, the centre of a one is inked.
        assert!(one.data()[14 * 28 + 14] + one.data()[14 * 28 + 13] > 0.5);
        assert_eq!(zero.data()[14 * 28 + 14], 0.0);
    }
}
