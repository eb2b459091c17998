use serde::Serialize;

use crate::data::{BoxKind, ImageSample};
use crate::diagnostics::align;
use crate::error::{LanError, Result};
use crate::lan::AttentionMask;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegionStat {
    /// Box kind, or `background` for pixels outside every box.
    pub region: String,
    pub mean: f32,
    pub max: f32,
    pub pixels: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegionReport {
    pub regions: Vec<RegionStat>,
}

impl RegionReport {
    pub fn get(&self, region: &str) -> Option<&RegionStat> {
        self.regions.iter().find(|r| r.region == region)
    }

    pub fn text(&self) -> String {
        let mut rows = vec![vec!["region".into(), "mean".into(), "max".into(), "pixels".into()]];
        rows.extend(self.regions.iter().map(|r| {
            vec![r.region.clone(), format!("{:.4}", r.mean), format!("{:.4}", r.max), r.pixels.to_string()]
        }));
        align(&rows)
    }
}

fn kind_name(k: BoxKind) -> &'static str {
    match k {
        BoxKind::Digit => "digit",
        BoxKind::Tank => "tank",
        BoxKind::Cloud => "cloud",
        BoxKind::Tree => "tree",
    }
}

/// Importance (`1 - mask`, averaged over channels) over the union of each
/// kind of box in `sample`, and over the remaining background.
pub fn region_stats(mask: &AttentionMask, sample: &ImageSample) -> Result<RegionReport> {
    if sample.boxes.is_empty() {
        return Err(LanError::Contract("region statistics need at least one labelled box".into()));
    }
    let (h, w) = (sample.height(), sample.width());
    let channels = match *mask.shape() {
        [c, mh, mw] if mh == h && mw == w => c,
        _ => {
            return Err(LanError::shape(
                "region stats",
                format!("mask {:?} vs image {:?}", mask.shape(), sample.pixels.shape()),
            ))
        }
    };
    let imp = mask.importance();
    let pixel = |x: usize, y: usize| -> f32 {
        (0..channels).map(|c| imp.data()[(c * h + y) * w + x]).sum::<f32>() / channels as f32
    };
    let mut kinds: Vec<BoxKind> = Vec::new();
    for b in &sample.boxes {
        if !kinds.contains(&b.kind) {
            kinds.push(b.kind);
        }
    }
    let stat = |name: &str, inside: &dyn Fn(usize, usize) -> bool| -> Option<RegionStat> {
        let vals: Vec<f32> = (0..h)
            .flat_map(|y| (0..w).map(move |x| (x, y)))
            .filter(|&(x, y)| inside(x, y))
            .map(|(x, y)| pixel(x, y))
            .collect();
        (!vals.is_empty()).then(|| RegionStat {
            region: name.to_string(),
            mean: vals.iter().sum::<f32>() / vals.len() as f32,
            max: vals.iter().copied().fold(f32::NEG_INFINITY, f32::max),
            pixels: vals.len(),
        })
    };
    let mut regions: Vec<RegionStat> = kinds
        .iter()
        .filter_map(|&k| stat(kind_name(k), &|x, y| sample.boxes_of(k).any(|b| b.contains(x, y))))
        .collect();
    regions.extend(stat("background", &|x, y| !sample.boxes.iter().any(|b| b.contains(x, y))));
    Ok(RegionReport { regions })
}
