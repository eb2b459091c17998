use serde::Serialize;

use crate::diagnostics::align;
use crate::error::{LanError, Result};
use crate::tensor::Tensor;

/// Mean-subtracted spatial autocorrelation of an `(H,W)` (or `(1,H,W)`) map
/// for lags `-L..=L` in both axes, `L = min(H,W)/4`, as a `(2L+1, 2L+1)`
/// tensor indexed `[dy+L, dx+L]`. Each lag is averaged over its own overlap
/// (the unbiased estimator) and divided by the per-pixel variance, so the
/// zero lag is exactly 1. The biased variant shrinks every lag toward zero
/// and flattens short-period peaks into the central lobe.
pub fn autocorrelation(map: &Tensor) -> Result<Tensor> {
    let (h, w) = match *map.shape() {
        [h, w] | [1, h, w] => (h, w),
        _ => return Err(LanError::shape("autocorrelation", format!("expected a 2-D map, got {:?}", map.shape()))),
    };
    let l = h.min(w) / 4;
    let mean = map.data().iter().map(|&v| v as f64).sum::<f64>() / (h * w) as f64;
    let c: Vec<f64> = map.data().iter().map(|&v| v as f64 - mean).collect();
    let var: f64 = c.iter().map(|v| v * v).sum::<f64>() / (h * w) as f64;
    if var == 0.0 {
        return Err(LanError::Contract("autocorrelation of a constant map".into()));
    }
    let side = 2 * l + 1;
    let mut out = vec![0.0f32; side * side];
    for dy in -(l as isize)..=l as isize {
        for dx in -(l as isize)..=l as isize {
            let mut acc = 0.0;
            let mut n = 0usize;
            for y in 0..h as isize {
                let y2 = y + dy;
                if y2 < 0 || y2 >= h as isize {
                    continue;
                }
                for x in 0..w as isize {
                    let x2 = x + dx;
                    if x2 >= 0 && x2 < w as isize {
                        acc += c[y as usize * w + x as usize] * c[y2 as usize * w + x2 as usize];
                        n += 1;
                    }
                }
            }
            out[(dy + l as isize) as usize * side + (dx + l as isize) as usize] = (acc / n as f64 / var) as f32;
        }
    }
    Tensor::new(vec![side, side], out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridReport {
    /// Height of the strongest secondary peak relative to the zero-lag peak.
    pub peak_ratio: f32,
    /// `(dx, dy)` of that peak; `None` when no secondary peak exists.
    pub lag: Option<(isize, isize)>,
    pub threshold: f32,
    pub detected: bool,
}

impl GridReport {
    pub fn text(&self) -> String {
        let lag = self.lag.map_or("-".to_string(), |(dx, dy)| format!("({dx},{dy})"));
        align(&[
            vec!["secondary peak".into(), format!("{:.4}", self.peak_ratio)],
            vec!["lag (dx,dy)".into(), lag],
            vec!["threshold".into(), format!("{:.2}", self.threshold)],
            vec!["grid detected".into(), self.detected.to_string()],
        ])
    }
}

pub const GRID_THRESHOLD: f32 = 0.2;

/// Finds the largest strict local maximum (8-neighbourhood, away from the
/// lag window's edge) of the autocorrelation outside the central lobe,
/// i.e. at a lag of at least 2 pixels along some axis.
pub fn detect_grid(map: &Tensor) -> Result<GridReport> {
    let ac = autocorrelation(map)?;
    let side = ac.shape()[0];
    let l = (side / 2) as isize;
    let at = |y: usize, x: usize| ac.data()[y * side + x];
    let mut best: Option<(f32, isize, isize)> = None;
    for y in 1..side - 1 {
        for x in 1..side - 1 {
            if (y as isize - l).abs().max((x as isize - l).abs()) < 2 {
                continue;
            }
            let v = at(y, x);
            let strict = (-1..=1isize)
                .flat_map(|a| (-1..=1isize).map(move |b| (a, b)))
                .filter(|&d| d != (0, 0))
                .all(|(a, b)| v > at((y as isize + a) as usize, (x as isize + b) as usize));
            if strict && best.is_none_or(|b| v > b.0) {
                best = Some((v, x as isize - l, y as isize - l));
            }
        }
    }
    let ratio = best.map_or(0.0, |b| b.0);
    Ok(GridReport {
        peak_ratio: ratio,
        lag: best.map(|b| (b.1, b.2)),
        threshold: GRID_THRESHOLD,
        detected: ratio >= GRID_THRESHOLD,
    })
}
