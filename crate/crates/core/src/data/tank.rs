//! Synthetic 32x32 forest scenes with camouflaged tanks and bright clouds.
//!
//! The tank is drawn in the same dark tones as the tree canopies, so the
//! cloud is by far the easiest cue when it co-occurs with the label.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::{BoxKind, ImageSample, LabeledBox};
use crate::error::{LanError, Result};
use crate::seed::{self, Rng};
use crate::tensor::Tensor;

pub const SCENE: usize = 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TankConfig {
    pub min_trees: usize,
    pub max_trees: usize,
    /// Cloud probability per scene when clouds are independent of the label.
    pub cloud_prob: f64,
    pub seed: u64,
}

impl Default for TankConfig {
    fn default() -> Self {
        TankConfig {
            min_trees: 3,
            max_trees: 7,
            cloud_prob: 0.5,
            seed: 0,
        }
    }
}

struct Canvas {
    px: Vec<f32>,
}

impl Canvas {
    fn set(&mut self, x: i32, y: i32, v: f32) -> bool {
        if (0..SCENE as i32).contains(&x) && (0..SCENE as i32).contains(&y) {
            self.px[y as usize * SCENE + x as usize] = v;
            true
        } else {
            false
        }
    }
}

fn draw_tree(c: &mut Canvas, rng: &mut Rng) -> LabeledBox {
    let ax = rng.gen_range(2..30i32);
    let ay = rng.gen_range(10..21i32);
    let height = rng.gen_range(6..10i32);
    let tone = rng.gen_range(0.16f32..0.22);
    let (mut x0, mut x1) = (ax, ax + 1);
    for dy in 0..height {
        let half = dy / 2;
        for x in ax - half..=ax + half {
            if c.set(x, ay + dy, tone) {
                x0 = x0.min(x);
                x1 = x1.max(x + 1);
            }
        }
    }
    for dy in 0..2 {
        c.set(ax, ay + height + dy, 0.3);
    }
    let y1 = (ay + height + 2).min(SCENE as i32);
    LabeledBox {
        kind: BoxKind::Tree,
        x0: x0.max(0) as usize,
        y0: ay as usize,
        x1: x1.min(SCENE as i32) as usize,
        y1: y1 as usize,
    }
}

/// Body 10x3 with a 4x2 turret and a 3-pixel barrel; box is 10x5.
fn draw_tank(c: &mut Canvas, rng: &mut Rng) -> LabeledBox {
    let tx = rng.gen_range(1..=21i32);
    let ty = rng.gen_range(17..=26i32);
    let tone = rng.gen_range(0.16f32..0.22);
    for x in tx + 3..tx + 7 {
        for y in ty..ty + 2 {
            c.set(x, y, tone);
        }
    }
    for x in tx + 7..tx + 10 {
        c.set(x, ty, tone);
    }
    for x in tx..tx + 10 {
        for y in ty + 2..ty + 5 {
            c.set(x, y, tone);
        }
    }
    LabeledBox {
        kind: BoxKind::Tank,
        x0: tx as usize,
        y0: ty as usize,
        x1: (tx + 10) as usize,
        y1: (ty + 5) as usize,
    }
}

fn draw_cloud(c: &mut Canvas, rng: &mut Rng) -> LabeledBox {
    let cx = rng.gen_range(8..24) as f32 + 0.5;
    let cy = rng.gen_range(3..6) as f32 + 0.5;
    let rx = rng.gen_range(4.5f32..7.0);
    let ry = rng.gen_range(2.0f32..3.0);
    let (mut x0, mut y0, mut x1, mut y1) = (SCENE, SCENE, 0, 0);
    for y in 0..SCENE {
        for x in 0..SCENE {
            let dx = (x as f32 + 0.5 - cx) / rx;
            let dy = (y as f32 + 0.5 - cy) / ry;
            if dx * dx + dy * dy <= 1.0 {
                c.set(x as i32, y as i32, 0.95);
                (x0, y0, x1, y1) = (x0.min(x), y0.min(y), x1.max(x + 1), y1.max(y + 1));
            }
        }
    }
    LabeledBox {
        kind: BoxKind::Cloud,
        x0,
        y0,
        x1,
        y1,
    }
}

fn scene(label: usize, cloud: bool, cfg: &TankConfig, rng: &mut Rng) -> Result<ImageSample> {
    let mut c = Canvas {
        px: (0..SCENE * SCENE).map(|_| rng.gen_range(0.44f32..0.56)).collect(),
    };
    let mut boxes = Vec::new();
    for _ in 0..rng.gen_range(cfg.min_trees..=cfg.max_trees) {
        boxes.push(draw_tree(&mut c, rng));
    }
    if label == 1 {
        boxes.push(draw_tank(&mut c, rng));
    }
    if cloud {
        boxes.push(draw_cloud(&mut c, rng));
    }
    ImageSample::new(Tensor::new(vec![1, SCENE, SCENE], c.px)?, label, boxes)
}

/// `n` scenes, half with a tank (label 1). With `correlated`, a cloud
/// appears exactly in the tank scenes; otherwise each scene gets a cloud
/// independently with probability `cfg.cloud_prob`.
pub fn gen_tank_forest(n: usize, cfg: &TankConfig, correlated: bool) -> Result<Vec<ImageSample>> {
    if n == 0 {
        return Err(LanError::Config("scene count must be >= 1".into()));
    }
    if cfg.min_trees > cfg.max_trees || !(0.0..=1.0).contains(&cfg.cloud_prob) {
        return Err(LanError::Config(format!("invalid tank domain config {cfg:?}")));
    }
    let mut rng = seed::rng_for(cfg.seed, seed::stream::DATA);
    let mut labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    labels.shuffle(&mut rng);
    labels
        .into_iter()
        .map(|label| {
            let cloud = if correlated {
                label == 1
            } else {
                rng.gen_bool(cfg.cloud_prob)
            };
            scene(label, cloud, cfg, &mut rng)
        })
        .collect()
}
