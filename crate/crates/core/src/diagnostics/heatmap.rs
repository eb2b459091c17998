use rand::Rng as _;
use rayon::prelude::*;
use serde::Serialize;

use crate::data::digits::CANVAS;
use crate::data::{downscale_digit, place_digit, ImageSample};
use crate::diagnostics::{align, Classifier};
use crate::error::{LanError, Result};
use crate::seed;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HeatmapCell {
    /// Digit centre column and row.
    pub x: usize,
    pub y: usize,
    pub correct: usize,
    /// `correct / trials`.
    pub raw: f64,
    /// Min-max normalised over all cells.
    pub normalized: f64,
}

/// Classification accuracy for digits centred at each canvas pixel. Only
/// centres where the whole digit fits are defined.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Heatmap {
    pub width: usize,
    pub height: usize,
    pub digit_size: usize,
    pub trials: usize,
    pub min: f64,
    pub max: f64,
    pub cells: Vec<HeatmapCell>,
}

impl Heatmap {
    pub fn cell(&self, x: usize, y: usize) -> Option<&HeatmapCell> {
        self.cells.iter().find(|c| c.x == x && c.y == y)
    }

    /// Mean raw accuracy over defined cells whose centre satisfies `keep`.
    pub fn mean_raw_where(&self, keep: impl Fn(usize, usize) -> bool) -> Option<f64> {
        let picked: Vec<f64> = self.cells.iter().filter(|c| keep(c.x, c.y)).map(|c| c.raw).collect();
        (!picked.is_empty()).then(|| picked.iter().sum::<f64>() / picked.len() as f64)
    }

    /// Normalised accuracy as an `(H,W)` image; undefined cells are 0.
    pub fn to_tensor(&self) -> Tensor {
        let mut t = Tensor::zeros(&[self.height, self.width]);
        for c in &self.cells {
            t.data_mut()[c.y * self.width + c.x] = c.normalized as f32;
        }
        t
    }

    pub fn text(&self) -> String {
        let mut rows = vec![vec![
            "x".to_string(),
            "y".to_string(),
            "correct".to_string(),
            "raw".to_string(),
            "normalized".to_string(),
        ]];
        rows.extend(self.cells.iter().map(|c| {
            vec![
                c.x.to_string(),
                c.y.to_string(),
                format!("{}/{}", c.correct, self.trials),
                format!("{:.4}", c.raw),
                format!("{:.4}", c.normalized),
            ]
        }));
        format!(
            "accuracy heatmap: {}x{} digits, {} trials per centre, raw range [{:.4}, {:.4}]\n{}",
            self.digit_size,
            self.digit_size,
            self.trials,
            self.min,
            self.max,
            align(&rows)
        )
    }
}

/// Places `trials` random source digits (28x28, downscaled to `digit_size`)
/// centred exactly at every feasible pixel and records how often
/// `classifier` recovers the label. Cells run in parallel, each with its own
/// derived seed, so the result is independent of the thread count.
pub fn accuracy_heatmap(
    classifier: &dyn Classifier,
    sources: &[ImageSample],
    digit_size: usize,
    trials: usize,
    seed: u64,
) -> Result<Heatmap> {
    if trials == 0 {
        return Err(LanError::Config("trials per position must be >= 1".into()));
    }
    if sources.is_empty() {
        return Err(LanError::Contract("heatmap needs at least one source digit".into()));
    }
    let small: Vec<Tensor> = sources
        .par_iter()
        .map(|s| downscale_digit(&s.pixels, digit_size))
        .collect::<Result<_>>()?;
    let half = digit_size / 2;
    let centres: Vec<(usize, usize)> = (0..CANVAS)
        .flat_map(|y| (0..CANVAS).map(move |x| (x, y)))
        .filter(|&(x, y)| x >= half && y >= half && x - half + digit_size <= CANVAS && y - half + digit_size <= CANVAS)
        .collect();
    let base = seed::derive_seed(seed, seed::stream::HEATMAP);

    let counts: Vec<usize> = centres
        .par_iter()
        .map(|&(cx, cy)| {
            let mut rng = seed::rng_for(base, (cy * CANVAS + cx) as u64);
            let mut xs = Vec::with_capacity(trials);
            let mut labels = Vec::with_capacity(trials);
            for _ in 0..trials {
                let i = rng.gen_range(0..sources.len());
                xs.push(place_digit(&small[i], cx - half, cy - half)?.0);
                labels.push(sources[i].label);
            }
            let preds = classifier.classify_batch(&xs)?;
            Ok(preds.iter().zip(&labels).filter(|(p, l)| p == l).count())
        })
        .collect::<Result<_>>()?;

    let raw: Vec<f64> = counts.iter().map(|&c| c as f64 / trials as f64).collect();
    let min = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let cells = centres
        .iter()
        .zip(counts.iter().zip(&raw))
        .map(|(&(x, y), (&correct, &r))| HeatmapCell {
            x,
            y,
            correct,
            raw: r,
            normalized: if max > min { (r - min) / (max - min) } else { 1.0 },
        })
        .collect();
    Ok(Heatmap {
        width: CANVAS,
        height: CANVAS,
        digit_size,
        trials,
        min,
        max,
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::render_digits;

    /// Reads the label back from a side channel: the sum of ink identifies
    /// the source digit.
    struct Oracle(Vec<(f32, usize)>);

    impl Classifier for Oracle {
        fn classify_batch(&self, xs: &[Tensor]) -> Result<Vec<usize>> {
            Ok(xs
                .iter()
                .map(|x| {
                    let s = x.sum();
                    self.0
                        .iter()
                        .min_by(|a, b| (a.0 - s).abs().total_cmp(&(b.0 - s).abs()))
                        .unwrap()
                        .1
                })
                .collect())
        }
    }

    struct Zero;

    impl Classifier for Zero {
        fn classify_batch(&self, xs: &[Tensor]) -> Result<Vec<usize>> {
            Ok(vec![0; xs.len()])
        }
    }

    fn sources() -> Vec<ImageSample> {
        render_digits(200, 11).unwrap()
    }

    #[test]
    fn perfect_classifier_is_flat() {
        let src = sources();
        let oracle = Oracle(
            src.iter()
                .map(|s| (downscale_digit(&s.pixels, 12).unwrap().sum(), s.label))
                .collect(),
        );
        let h = accuracy_heatmap(&oracle, &src, 12, 5, 1).unwrap();
        assert_eq!(h.cells.len(), 17 * 17);
        assert!(h.cells.iter().all(|c| c.raw == 1.0 && c.normalized == 1.0));
        assert!(h.cell(5, 5).is_none());
        assert!(h.cell(6, 6).is_some());
        assert!(h.cell(22, 22).is_some());
        assert!(h.cell(23, 22).is_none());
    }

    #[test]
    fn constant_classifier_scores_chance() {
        let src = sources();
        let h = accuracy_heatmap(&Zero, &src, 7, 60, 2).unwrap();
        assert_eq!(h.cells.len(), 22 * 22);
        let mean = h.mean_raw_where(|_, _| true).unwrap();
        // Binomial std of the mean over 484 cells x 60 trials is ~0.002.
        let base = src.iter().filter(|s| s.label == 0).count() as f64 / src.len() as f64;
        assert!((mean - base).abs() < 0.01, "{mean} vs {base}");
        for c in &h.cells {
            assert_eq!(c.raw, c.correct as f64 / 60.0);
            assert!((0.0..=1.0).contains(&c.normalized));
        }
    }

    #[test]
    fn thread_count_does_not_matter() {
        let src = sources();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| accuracy_heatmap(&Zero, &src, 12, 3, 9).unwrap())
        };
        assert_eq!(run(1), run(4));
        assert!(accuracy_heatmap(&Zero, &src, 12, 0, 9).is_err());
    }
}
