//! Small digits placed at random positions on an empty 28x28 canvas.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::digits::CANVAS;
use crate::data::{BoxKind, ImageSample, LabeledBox};
use crate::error::{LanError, Result};
use crate::seed;
use crate::tensor::Tensor;

/// Rectangle `x0..x1` by `y0..y1` (exclusive ends) on the canvas.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl Region {
    pub fn new(x0: usize, y0: usize, x1: usize, y1: usize) -> Result<Self> {
        if x0 >= x1 || y0 >= y1 || x1 > CANVAS || y1 > CANVAS {
            return Err(LanError::Config(format!(
                "region {x0},{y0},{x1},{y1} is empty or outside the {CANVAS}x{CANVAS} canvas"
            )));
        }
        Ok(Region { x0, y0, x1, y1 })
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }

    /// Whether the square of side `size` at top-left `(x, y)` overlaps this region.
    pub fn overlaps(&self, x: usize, y: usize, size: usize) -> bool {
        x < self.x1 && x + size > self.x0 && y < self.y1 && y + size > self.y0
    }
}

impl std::str::FromStr for Region {
    type Err = LanError;

    /// Parses `x0,y0,x1,y1`.
    fn from_str(s: &str) -> Result<Self> {
        let v: Vec<usize> = s
            .split(',')
            .map(|p| p.trim().parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| LanError::Config(format!("region must be x0,y0,x1,y1, got {s:?}")))?;
        match v[..] {
            [x0, y0, x1, y1] => Region::new(x0, y0, x1, y1),
            _ => Err(LanError::Config(format!("region must be x0,y0,x1,y1, got {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranslatedConfig {
    /// 12 or 7.
    pub digit_size: usize,
    /// No placed digit box intersects this region.
    pub exclude: Option<Region>,
    pub seed: u64,
}

impl TranslatedConfig {
    pub fn validate(&self) -> Result<()> {
        if self.digit_size != 12 && self.digit_size != 7 {
            return Err(LanError::Config(format!(
                "digit size must be 12 or 7, got {}",
                self.digit_size
            )));
        }
        if let Some(r) = self.exclude {
            Region::new(r.x0, r.y0, r.x1, r.y1)?;
        }
        Ok(())
    }

    /// Top-left offsets whose digit box avoids the excluded region, row-major.
    pub fn valid_offsets(&self) -> Vec<(usize, usize)> {
        let last = CANVAS - self.digit_size;
        (0..=last)
            .flat_map(|y| (0..=last).map(move |x| (x, y)))
            .filter(|&(x, y)| !self.exclude.is_some_and(|r| r.overlaps(x, y, self.digit_size)))
            .collect()
    }
}

/// Box-averages a `(1,28,28)` digit to `(size,size)`: size 12 averages 2x2
/// blocks of the central 24x24 crop, size 7 averages 4x4 blocks of the canvas.
pub fn downscale_digit(src: &Tensor, size: usize) -> Result<Tensor> {
    if src.shape() != [1, CANVAS, CANVAS] {
        return Err(LanError::shape(
            "downscale",
            format!("source digit must be (1,28,28), got {:?}", src.shape()),
        ));
    }
    let (offset, block) = match size {
        12 => (2, 2),
        7 => (0, 4),
        _ => return Err(LanError::Config(format!("digit size must be 12 or 7, got {size}"))),
    };
    let px = src.data();
    let norm = (block * block) as f32;
    let data = (0..size * size)
        .map(|i| {
            let (r, c) = (i / size, i % size);
            let mut acc = 0.0;
            for dy in 0..block {
                for dx in 0..block {
                    acc += px[(offset + r * block + dy) * CANVAS + offset + c * block + dx];
                }
            }
            acc / norm
        })
        .collect();
    Tensor::new(vec![size, size], data)
}

/// Copies a `(s,s)` digit onto an empty canvas with top-left corner `(x, y)`.
pub fn place_digit(small: &Tensor, x: usize, y: usize) -> Result<(Tensor, LabeledBox)> {
    let [s, s2] = *small.shape() else {
        return Err(LanError::shape("place digit", format!("{:?} is not square", small.shape())));
    };
    if s != s2 || x + s > CANVAS || y + s > CANVAS {
        return Err(LanError::shape(
            "place digit",
            format!("{s}x{s2} digit at ({x},{y}) leaves the canvas"),
        ));
    }
    let mut canvas = vec![0.0f32; CANVAS * CANVAS];
    for r in 0..s {
        canvas[(y + r) * CANVAS + x..(y + r) * CANVAS + x + s]
            .copy_from_slice(&small.data()[r * s..(r + 1) * s]);
    }
    let bbox = LabeledBox {
        kind: BoxKind::Digit,
        x0: x,
        y0: y,
        x1: x + s,
        y1: y + s,
    };
    Ok((Tensor::new(vec![1, CANVAS, CANVAS], canvas)?, bbox))
}

/// Downscales every source digit and places it at an offset drawn uniformly
/// from [`TranslatedConfig::valid_offsets`].
pub fn make_translated(samples: &[ImageSample], cfg: &TranslatedConfig) -> Result<Vec<ImageSample>> {
    cfg.validate()?;
    let offsets = cfg.valid_offsets();
    if offsets.is_empty() {
        return Err(LanError::Config(
            "excluded region leaves no valid digit placement".into(),
        ));
    }
    let mut rng = seed::rng_for(cfg.seed, seed::stream::PLACEMENT);
    samples
        .iter()
        .map(|s| {
            let small = downscale_digit(&s.pixels, cfg.digit_size)?;
            let (x, y) = offsets[rng.gen_range(0..offsets.len())];
            let (pixels, bbox) = place_digit(&small, x, y)?;
            ImageSample::new(pixels, s.label, vec![bbox])
        })
        .collect()
}
