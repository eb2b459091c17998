use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::cli::pgm::{encode_pgm, image_of};
use crate::cli::run::{merge_settings, required, Session};
use crate::cli::{
    BetaSweepArgs, Common, GenDataArgs, GridArgs, HeatmapArgs, RegionsArgs, RenderArgs, SampleMaskArgs, TopkArgs,
    TrainArgs, TrainLanArgs,
};
use crate::data::{
    gen_corpus, gen_tank_forest, load_dataset, load_idx, load_real_corpus, make_translated, render_digits,
    save_dataset, CorpusConfig, ImageSample, Region, StoredDataset, TankConfig, TranslatedConfig,
};
use crate::diagnostics::{
    accuracy_heatmap, beta_sweep, detect_grid, mean_mask, region_stats, top_k_words, BetaRecord,
};
use crate::error::{LanError, Result};
use crate::lan::presets::{lan_preset, sample_preset};
use crate::lan::{train_lan, train_sample_mask, AttentionMask, LanModel, NoiseKind, SampleMaskConfig};
use crate::nn::presets::{classifier_preset, Scale};
use crate::nn::{continue_training, train_classifier, Checkpoint, TrainConfig};
use crate::tensor::Tensor;

pub const DOMAINS: &[&str] = &["digits", "translated", "tank", "corpus"];

pub(crate) enum Job {
    GenData(GenDataArgs),
    Train(TrainArgs),
    TrainLan(TrainLanArgs),
    SampleMask(SampleMaskArgs),
    Render(RenderArgs),
    Heatmap(HeatmapArgs),
    Grid(GridArgs),
    Topk(TopkArgs),
    Regions(RegionsArgs),
    BetaSweep(BetaSweepArgs),
}

impl Job {
    pub fn execute(self, common: &Common) -> Result<()> {
        match self {
            Job::GenData(a) => gen_data(merge_settings(&a, common)?, Session::new("gen-data", common)),
            Job::Train(a) => train(merge_settings(&a, common)?, Session::new("train", common)),
            Job::TrainLan(a) => train_lan_cmd(merge_settings(&a, common)?, Session::new("train-lan", common)),
            Job::SampleMask(a) => sample_mask(merge_settings(&a, common)?, Session::new("sample-mask", common)),
            Job::Render(a) => render(merge_settings(&a, common)?, Session::new("render", common)),
            Job::Heatmap(a) => heatmap(merge_settings(&a, common)?, Session::new("report-heatmap", common)),
            Job::Grid(a) => grid(merge_settings(&a, common)?, Session::new("report-grid", common)),
            Job::Topk(a) => topk(merge_settings(&a, common)?, Session::new("report-topk", common)),
            Job::Regions(a) => regions(merge_settings(&a, common)?, Session::new("report-regions", common)),
            Job::BetaSweep(a) => sweep(merge_settings(&a, common)?, Session::new("report-beta-sweep", common)),
        }
    }
}

fn open_dataset(session: &mut Session, dir: &Path) -> Result<StoredDataset> {
    session.input(dir);
    load_dataset(dir)
}

fn open_checkpoint(session: &mut Session, path: &Path) -> Result<Checkpoint> {
    session.input(path);
    Checkpoint::load(path)
}

fn open_mask(session: &mut Session, path: &Path) -> Result<AttentionMask> {
    session.input(path);
    AttentionMask::load(path)
}

fn parse_scale(s: &Option<String>) -> Result<Scale> {
    s.as_deref().map_or(Ok(Scale::Desk), str::parse)
}

fn parse_noise(s: &Option<String>) -> Result<Option<NoiseKind>> {
    s.as_deref().map(str::parse).transpose()
}

fn sample(ds: &StoredDataset, index: usize) -> Result<&Tensor> {
    ds.inputs.get(index).ok_or_else(|| {
        LanError::Config(format!("sample index {index} out of range (dataset has {})", ds.inputs.len()))
    })
}

/// `7`, `1,4,9` or `0..10`.
fn parse_indices(s: &str) -> Result<Vec<usize>> {
    let bad = || LanError::Config(format!("invalid sample indices {s:?}; use 3, 0,4,9 or 0..10"));
    if let Some((a, b)) = s.split_once("..") {
        let (a, b): (usize, usize) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        if a >= b {
            return Err(bad());
        }
        return Ok((a..b).collect());
    }
    s.split(',').map(|t| t.trim().parse().map_err(|_| bad())).collect()
}

fn parse_betas(s: &str) -> Result<Vec<f32>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse()
                .map_err(|_| LanError::Config(format!("invalid beta list {s:?}")))
        })
        .collect()
}

/// Per-sample mask recipe matching a dataset's domain.
fn default_sample_preset(domain: &str) -> &'static str {
    match domain {
        "corpus" => "sample-specific-documents",
        "tank" => "tank",
        _ => "sample-specific",
    }
}

fn sample_config(
    preset: &Option<String>,
    domain: &str,
    beta: Option<f32>,
    learning_rate: Option<f32>,
    iterations: Option<u64>,
    noise: &Option<String>,
    seed: Option<u64>,
) -> Result<(String, SampleMaskConfig)> {
    let name = preset.clone().unwrap_or_else(|| default_sample_preset(domain).into());
    let mut cfg = sample_preset(&name)?;
    if let Some(b) = beta {
        cfg.beta = b;
    }
    if let Some(lr) = learning_rate {
        cfg.learning_rate = lr;
    }
    if let Some(it) = iterations {
        cfg.iterations = it;
    }
    if let Some(n) = parse_noise(noise)? {
        cfg.noise = n;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok((name, cfg))
}

fn render_map(map: &Tensor) -> Result<Vec<u8>> {
    let (w, h, px) = image_of(map)?;
    Ok(encode_pgm(w, h, px))
}

fn digit_sources(a: &GenDataArgs, count: usize, seed: u64, session: &mut Session) -> Result<(Vec<ImageSample>, Value)> {
    match (&a.idx_images, &a.idx_labels) {
        (Some(images), Some(labels)) => {
            session.input(images);
            session.input(labels);
            let mut all = load_idx(images, labels)?;
            if let Some(n) = a.count {
                all.truncate(n);
            }
            let src = json!({"idx_images": images, "idx_labels": labels});
            Ok((all, src))
        }
        (None, None) => Ok((render_digits(count, seed)?, json!("rendered"))),
        _ => Err(LanError::Config("--idx-images and --idx-labels go together".into())),
    }
}

fn gen_data(a: GenDataArgs, mut session: Session) -> Result<()> {
    let domain = required(&a.domain, "domain")?;
    let seed = a.seed.unwrap_or(0);
    let (config, data) = match domain.as_str() {
        "digits" => {
            let count = a.count.unwrap_or(10_000);
            let (samples, source) = digit_sources(&a, count, seed, &mut session)?;
            let config = json!({"domain": domain, "count": samples.len(), "seed": seed, "source": source});
            let data = StoredDataset::from_images(&domain, config.clone(), seed, 10, &samples)?;
            (config, data)
        }
        "translated" => {
            let count = a.count.unwrap_or(10_000);
            let (src, source) = digit_sources(&a, count, seed, &mut session)?;
            let cfg = TranslatedConfig {
                digit_size: a.digit_size.unwrap_or(12),
                exclude: a.exclude.as_deref().map(str::parse::<Region>).transpose()?,
                seed,
            };
            let samples = make_translated(&src, &cfg)?;
            let config = json!({"domain": domain, "count": samples.len(), "seed": seed, "source": source, "translated": cfg});
            let data = StoredDataset::from_images(&domain, config.clone(), seed, 10, &samples)?;
            (config, data)
        }
        "tank" => {
            let count = a.count.unwrap_or(2_000);
            let correlated = match a.clouds.as_deref().unwrap_or("correlated") {
                "correlated" => true,
                "independent" => false,
                other => {
                    return Err(LanError::Config(format!(
                        "unknown cloud mode {other:?}; expected correlated or independent"
                    )))
                }
            };
            let cfg = TankConfig {
                cloud_prob: a.cloud_prob.unwrap_or(0.5),
                seed,
                ..TankConfig::default()
            };
            let samples = gen_tank_forest(count, &cfg, correlated)?;
            let config = json!({"domain": domain, "count": count, "seed": seed, "correlated": correlated, "tank": cfg});
            let data = StoredDataset::from_images(&domain, config.clone(), seed, 2, &samples)?;
            (config, data)
        }
        "corpus" => {
            let defaults = CorpusConfig::default();
            let vocab_size = a.vocab_size.unwrap_or(defaults.vocab_size);
            if let Some(path) = &a.corpus_file {
                session.input(path);
                let (vocab, docs) = load_real_corpus(path, None, vocab_size)?;
                let classes = a
                    .classes
                    .unwrap_or_else(|| docs.iter().map(|d| d.label + 1).max().unwrap_or(1));
                let config = json!({"domain": domain, "count": docs.len(), "seed": seed, "corpus_file": path, "vocab_size": vocab_size, "classes": classes});
                let data = StoredDataset::from_documents(&domain, config.clone(), seed, classes, &vocab, &docs)?;
                (config, data)
            } else {
                let cfg = CorpusConfig {
                    classes: a.classes.unwrap_or(defaults.classes),
                    keywords_per_class: a.keywords_per_class.unwrap_or(defaults.keywords_per_class),
                    vocab_size,
                    docs: a.count.unwrap_or(defaults.docs),
                    seed,
                    ..defaults
                };
                let (vocab, docs) = gen_corpus(&cfg)?;
                let config = json!({"domain": domain, "count": docs.len(), "seed": seed, "corpus": cfg});
                let data = StoredDataset::from_documents(&domain, config.clone(), seed, cfg.classes, &vocab, &docs)?;
                (config, data)
            }
        }
        other => {
            return Err(LanError::Config(format!(
                "unknown domain {other:?}; valid domains: {}",
                DOMAINS.join(", ")
            )))
        }
    };
    save_dataset(session.out(), &data)?;
    for name in [crate::data::store::INPUTS, crate::data::store::LABELS, crate::data::store::MANIFEST] {
        let p = session.out().join(name);
        session.record(&p);
    }
    println!("{domain}: {} samples, input shape {:?}", data.inputs.len(), data.manifest.input_shape);
    session.finish(&config, seed)
}

fn default_classifier(domain: &str) -> Result<&'static str> {
    match domain {
        "digits" | "translated" => Ok("digit-appendix"),
        "tank" => Ok("tank"),
        "corpus" => Ok("documents"),
        other => Err(LanError::Config(format!("no default classifier for domain {other:?}; pass --preset"))),
    }
}

#[derive(Serialize)]
struct TrainSummary {
    iterations: u64,
    final_loss: Option<f32>,
    train_accuracy: f64,
}

fn train(a: TrainArgs, mut session: Session) -> Result<()> {
    let data_dir = required(&a.data, "data")?;
    let ds = open_dataset(&mut session, &data_dir)?;
    let scale = parse_scale(&a.scale)?;
    let name = match &a.preset {
        Some(p) => p.clone(),
        None => default_classifier(&ds.manifest.domain)?.into(),
    };
    let preset = classifier_preset(&name, &ds.manifest.input_shape, ds.manifest.classes, scale)?;
    let cfg = TrainConfig {
        learning_rate: a.learning_rate.unwrap_or(preset.train.learning_rate),
        iterations: a.iterations.unwrap_or(preset.train.iterations),
        batch_size: a.batch_size.unwrap_or(preset.train.batch_size),
        seed: a.seed.unwrap_or(preset.train.seed),
    };
    let outcome = match &a.resume {
        Some(path) => {
            let start = open_checkpoint(&mut session, path)?;
            continue_training(start, &ds.inputs, &ds.labels, &cfg)?
        }
        None => train_classifier(&preset.spec, &ds.inputs, &ds.labels, &cfg)?,
    };
    let model = &outcome.checkpoint;
    session.write("model.ckpt", &model.to_bytes())?;
    let summary = TrainSummary {
        iterations: cfg.iterations,
        final_loss: outcome.losses.last().copied(),
        train_accuracy: model.accuracy(&ds.inputs, &ds.labels)?,
    };
    session.write_json("train.json", &summary)?;
    println!(
        "{name} ({scale:?}): {} iterations, train accuracy {:.4}",
        cfg.iterations, summary.train_accuracy
    );
    let config = json!({
        "data": data_dir, "preset": name, "scale": scale, "resume": a.resume,
        "spec": model.spec, "train": cfg,
    });
    session.finish(&config, cfg.seed)
}

fn default_lan(domain: &str) -> Result<&'static str> {
    match domain {
        "digits" | "translated" => Ok("digits"),
        "corpus" => Ok("documents"),
        other => Err(LanError::Config(format!("no default attention preset for domain {other:?}; pass --preset"))),
    }
}

fn train_lan_cmd(a: TrainLanArgs, mut session: Session) -> Result<()> {
    let model = open_checkpoint(&mut session, &required(&a.model, "model")?)?;
    let data_dir = required(&a.data, "data")?;
    let ds = open_dataset(&mut session, &data_dir)?;
    let scale = parse_scale(&a.scale)?;
    let name = match &a.preset {
        Some(p) => p.clone(),
        None => default_lan(&ds.manifest.domain)?.into(),
    };
    let mut cfg = lan_preset(&name, &model.spec.input_shape, scale)?;
    if let Some(b) = a.beta {
        cfg.beta = b;
    }
    if let Some(lr) = a.learning_rate {
        cfg.learning_rate = lr;
    }
    if let Some(it) = a.iterations {
        cfg.iterations = it;
    }
    if let Some(n) = parse_noise(&a.noise)? {
        cfg.noise = n;
    }
    if let Some(k) = a.noise_samples {
        cfg.noise_samples = k;
    }
    if let Some(b) = a.batch_size {
        cfg.batch_size = b;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let outcome = train_lan(&model, &ds.inputs, &cfg)?;
    session.write("lan.ckpt", &outcome.model.checkpoint.to_bytes())?;
    let final_loss = outcome.losses.last().copied();
    session.write_json("train-lan.json", &json!({"iterations": cfg.iterations, "final_loss": final_loss}))?;
    println!("{name} ({scale:?}): {} iterations, final loss {final_loss:?}", cfg.iterations);
    let config = json!({"model": a.model, "data": data_dir, "preset": name, "scale": scale, "lan": cfg});
    session.finish(&config, cfg.seed)
}

#[derive(Serialize)]
struct MaskSummary {
    index: usize,
    label: usize,
    predicted: usize,
    mean_mask: f32,
    final_loss: Option<f32>,
    file: String,
}

fn sample_mask(a: SampleMaskArgs, mut session: Session) -> Result<()> {
    let model = open_checkpoint(&mut session, &required(&a.model, "model")?)?;
    let data_dir = required(&a.data, "data")?;
    let ds = open_dataset(&mut session, &data_dir)?;
    let indices = parse_indices(a.indices.as_deref().unwrap_or("0"))?;
    let xs: Vec<&Tensor> = indices.iter().map(|&i| sample(&ds, i)).collect::<Result<_>>()?;

    let (config, seed, masks): (Value, u64, Vec<(AttentionMask, Option<f32>)>) = match &a.lan {
        Some(path) => {
            session.input(path);
            let lan = LanModel::new(Checkpoint::load(path)?)?;
            let masks = lan.masks(&xs)?.into_iter().map(|m| (m, None)).collect();
            let config = json!({"model": a.model, "data": data_dir, "indices": indices, "lan": path});
            (config, a.seed.unwrap_or(0), masks)
        }
        None => {
            let (name, cfg) = sample_config(
                &a.preset,
                &ds.manifest.domain,
                a.beta,
                a.learning_rate,
                a.iterations,
                &a.noise,
                a.seed,
            )?;
            let mut cfg = cfg;
            if let Some(k) = a.noise_samples {
                cfg.noise_samples = k;
            }
            let masks = xs
                .par_iter()
                .map(|x| {
                    let out = train_sample_mask(&model, x, &ds.inputs, &cfg)?;
                    let last = out.final_loss();
                    Ok((out.mask, last))
                })
                .collect::<Result<Vec<_>>>()?;
            let config = json!({"model": a.model, "data": data_dir, "indices": indices, "preset": name, "mask": cfg});
            (config, cfg.seed, masks)
        }
    };

    let mut summary = Vec::with_capacity(indices.len());
    for ((&i, x), (mask, final_loss)) in indices.iter().zip(&xs).zip(&masks) {
        let file = format!("mask_{i}.lmask");
        session.write(&file, &mask.to_bytes())?;
        summary.push(MaskSummary {
            index: i,
            label: ds.labels[i],
            predicted: model.classify(x)?,
            mean_mask: mask.mean(),
            final_loss: *final_loss,
            file,
        });
    }
    session.write_json("sample-mask.json", &summary)?;
    for s in &summary {
        println!("sample {} (label {}): mean mask {:.4} -> {}", s.index, s.label, s.mean_mask, s.file);
    }
    session.finish(&config, seed)
}

fn render(a: RenderArgs, mut session: Session) -> Result<()> {
    let path = required(&a.mask, "mask")?;
    let mask = open_mask(&mut session, &path)?;
    let mode = a.mode.clone().unwrap_or_else(|| "importance".into());
    let map = match mode.as_str() {
        "importance" => mask.importance(),
        "mask" => mask.values().clone(),
        other => {
            return Err(LanError::Config(format!(
                "unknown render mode {other:?}; expected mask or importance"
            )))
        }
    };
    let output = a.output.clone().unwrap_or_else(|| {
        let stem = path.file_stem().map_or("mask".into(), |s| s.to_string_lossy().into_owned());
        session.out().join(format!("{stem}.pgm"))
    });
    session.write_at(&output, &render_map(&map)?)?;
    println!("wrote {}", output.display());
    let config = json!({"mask": path, "mode": mode, "output": output});
    session.finish(&config, a.seed.unwrap_or(0))
}

fn heatmap(a: HeatmapArgs, mut session: Session) -> Result<()> {
    let model = open_checkpoint(&mut session, &required(&a.model, "model")?)?;
    let source_dir = required(&a.source, "source")?;
    let source = open_dataset(&mut session, &source_dir)?.images()?;
    let digit_size = a.digit_size.unwrap_or(12);
    let trials = a.trials.unwrap_or(50);
    let seed = a.seed.unwrap_or(0);
    let map = accuracy_heatmap(&model, &source, digit_size, trials, seed)?;
    session.write_json("heatmap.json", &map)?;
    let text = map.text();
    session.write("heatmap.txt", text.as_bytes())?;
    session.write("heatmap.pgm", &render_map(&map.to_tensor())?)?;
    print!("{text}");
    let config = json!({"model": a.model, "source": source_dir, "digit_size": digit_size, "trials": trials, "seed": seed});
    session.finish(&config, seed)
}

fn grid(a: GridArgs, mut session: Session) -> Result<()> {
    let lan_path = required(&a.lan, "lan")?;
    session.input(&lan_path);
    let lan = LanModel::new(Checkpoint::load(&lan_path)?)?;
    let data_dir = required(&a.data, "data")?;
    let ds = open_dataset(&mut session, &data_dir)?;
    let n = a.limit.unwrap_or(ds.inputs.len()).min(ds.inputs.len());
    let mm = mean_mask(&lan, &ds.inputs[..n])?;
    let report = detect_grid(&mm)?;
    session.write_json(
        "grid.json",
        &json!({"report": report, "samples": n, "shape": mm.shape(), "mean_importance": mm.data()}),
    )?;
    let text = report.text();
    session.write("grid.txt", text.as_bytes())?;
    session.write("mean-importance.pgm", &render_map(&mm)?)?;
    print!("{text}");
    let config = json!({"lan": lan_path, "data": data_dir, "limit": n});
    session.finish(&config, a.seed.unwrap_or(0))
}

fn topk(a: TopkArgs, mut session: Session) -> Result<()> {
    let mask_path = required(&a.mask, "mask")?;
    let mask = open_mask(&mut session, &mask_path)?;
    let data_dir = required(&a.data, "data")?;
    let ds = open_dataset(&mut session, &data_dir)?;
    let vocab = ds
        .manifest
        .vocabulary
        .as_ref()
        .ok_or_else(|| LanError::Contract(format!("{} has no vocabulary", data_dir.display())))?;
    let k = a.k.unwrap_or(15);
    let ranking = top_k_words(&mask.importance(), vocab, k)?;
    session.write_json("topk.json", &ranking)?;
    let text = ranking.text();
    session.write("topk.txt", text.as_bytes())?;
    print!("{text}");
    let config = json!({"mask": mask_path, "data": data_dir, "k": k});
    session.finish(&config, a.seed.unwrap_or(0))
}

fn regions(a: RegionsArgs, mut session: Session) -> Result<()> {
    let mask_path = required(&a.mask, "mask")?;
    let mask = open_mask(&mut session, &mask_path)?;
    let data_dir = required(&a.data, "data")?;
    let ds = open_dataset(&mut session, &data_dir)?;
    let index = a.index.unwrap_or(0);
    sample(&ds, index)?;
    let image = ds.images()?.swap_remove(index);
    let report = region_stats(&mask, &image)?;
    session.write_json("regions.json", &report)?;
    let text = report.text();
    session.write("regions.txt", text.as_bytes())?;
    print!("{text}");
    let config = json!({"mask": mask_path, "data": data_dir, "index": index});
    session.finish(&config, a.seed.unwrap_or(0))
}

fn sweep(a: BetaSweepArgs, mut session: Session) -> Result<()> {
    let model = open_checkpoint(&mut session, &required(&a.model, "model")?)?;
    let data_dir = required(&a.data, "data")?;
    let ds = open_dataset(&mut session, &data_dir)?;
    let index = a.index.unwrap_or(0);
    let x = sample(&ds, index)?;
    let betas = parse_betas(a.betas.as_deref().unwrap_or("0.5,5,50"))?;
    let (name, cfg) = sample_config(
        &a.preset,
        &ds.manifest.domain,
        None,
        a.learning_rate,
        a.iterations,
        &a.noise,
        a.seed,
    )?;
    let records = beta_sweep(&model, x, &ds.inputs, &betas, &cfg)?;
    for (i, r) in records.iter().enumerate() {
        session.write(&format!("beta_{i}.lmask"), &r.mask.to_bytes())?;
    }
    session.write_json("beta-sweep.json", &records)?;
    let text = BetaRecord::text(&records);
    session.write("beta-sweep.txt", text.as_bytes())?;
    print!("{text}");
    let config = json!({"model": a.model, "data": data_dir, "index": index, "betas": betas, "preset": name, "mask": cfg});
    session.finish(&config, cfg.seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_lists() {
        assert_eq!(parse_indices("3").unwrap(), vec![3]);
        assert_eq!(parse_indices("0, 4,9").unwrap(), vec![0, 4, 9]);
        assert_eq!(parse_indices("2..5").unwrap(), vec![2, 3, 4]);
        assert!(parse_indices("5..2").is_err());
        assert!(parse_indices("a").is_err());
    }

    #[test]
    fn beta_lists() {
        assert_eq!(parse_betas("0.5,50").unwrap(), vec![0.5, 50.0]);
        assert_eq!(parse_betas("x").unwrap_err().exit_code(), 2);
    }
}
