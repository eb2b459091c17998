use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lankit::cli::RunManifest;
use lankit::data::{load_dataset, BoxKind, Region};
use lankit::lan::AttentionMask;
use lankit::nn::presets::{classifier_preset, Scale};
use lankit::nn::Checkpoint;
use lankit::Tensor;

fn lankit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lankit"))
        .args(args)
        .env_remove("LANKIT_OUT")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = lankit(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn manifest(dir: &Path, command: &str) -> RunManifest {
    serde_json::from_slice(&fs::read(dir.join(format!("{command}.run.json"))).unwrap()).unwrap()
}

fn gen(dir: &Path, extra: &[&str]) -> PathBuf {
    let mut args = vec!["gen-data", "--out", p(dir)];
    args.extend_from_slice(extra);
    ok(&args);
    dir.to_path_buf()
}

#[test]
fn gen_data_is_deterministic() {
    let t = tempfile::tempdir().unwrap();
    let a = gen(&t.path().join("a"), &["--domain", "translated", "--digit-size", "12", "--seed", "7", "--count", "300"]);
    let b = gen(&t.path().join("b"), &["--domain", "translated", "--digit-size", "12", "--seed", "7", "--count", "300"]);
    for f in ["inputs.f32", "labels.u8", "manifest.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let c = gen(&t.path().join("c"), &["--domain", "translated", "--seed", "8", "--count", "300"]);
    assert_ne!(fs::read(a.join("inputs.f32")).unwrap(), fs::read(c.join("inputs.f32")).unwrap());
}

#[test]
fn exclusion_is_recorded_and_respected() {
    let t = tempfile::tempdir().unwrap();
    let d = gen(t.path(), &["--domain", "translated", "--exclude", "16,16,28,28", "--count", "400"]);
    let ds = load_dataset(&d).unwrap();
    assert_eq!(ds.manifest.config["translated"]["exclude"], serde_json::json!({"x0": 16, "y0": 16, "x1": 28, "y1": 28}));
    let region = Region::new(16, 16, 28, 28).unwrap();
    for s in ds.images().unwrap() {
        for b in s.boxes_of(BoxKind::Digit) {
            let hit = (b.y0..b.y1).any(|y| (b.x0..b.x1).any(|x| region.contains(x, y)));
            assert!(!hit, "{b:?} intersects the excluded region");
        }
    }
    assert_eq!(manifest(&d, "gen-data").config["translated"]["exclude"]["x0"], 16);
}

#[test]
fn unknown_domain_lists_valid_ones() {
    let t = tempfile::tempdir().unwrap();
    let out = lankit(&["gen-data", "--domain", "mnist-c", "--out", p(t.path())]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    for d in ["digits", "translated", "tank", "corpus"] {
        assert!(err.contains(d), "{err}");
    }
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(lankit(&["train", "--bogus"]).status.code(), Some(2));
    assert_eq!(lankit(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(lankit(&["--help"]).status.code(), Some(0));
}

#[test]
fn zero_iterations_keep_the_initialisation() {
    let t = tempfile::tempdir().unwrap();
    let d = gen(&t.path().join("d"), &["--domain", "translated", "--count", "50"]);
    let m = t.path().join("m");
    ok(&["train", "--data", p(&d), "--iterations", "0", "--seed", "3", "--out", p(&m)]);
    let trained = Checkpoint::load(&m.join("model.ckpt")).unwrap();
    let preset = classifier_preset("digit-appendix", &[1, 28, 28], 10, Scale::Desk).unwrap();
    let init = Checkpoint::initialize(preset.spec, 3).unwrap();
    assert_eq!(trained.params, init.params);
    assert_eq!(manifest(&m, "train").config["preset"], "digit-appendix");
    assert_eq!(manifest(&m, "train").config["train"]["learning_rate"].as_f64().unwrap() as f32, 0.001);
}

#[test]
fn corrupt_resume_checkpoint_exits_3() {
    let t = tempfile::tempdir().unwrap();
    let d = gen(&t.path().join("d"), &["--domain", "tank", "--count", "20"]);
    let bad = t.path().join("bad.ckpt");
    fs::write(&bad, b"NOTACKPT and some more bytes").unwrap();
    let out = lankit(&["train", "--data", p(&d), "--resume", p(&bad), "--out", p(&t.path().join("m"))]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad magic"));
}

#[test]
fn resume_continues_from_the_checkpoint() {
    let t = tempfile::tempdir().unwrap();
    let d = gen(&t.path().join("d"), &["--domain", "tank", "--count", "40"]);
    let m1 = t.path().join("m1");
    ok(&["train", "--data", p(&d), "--iterations", "5", "--out", p(&m1)]);
    let m2 = t.path().join("m2");
    let ckpt = m1.join("model.ckpt");
    ok(&["train", "--data", p(&d), "--iterations", "5", "--resume", p(&ckpt), "--out", p(&m2)]);
    let first = Checkpoint::load(&ckpt).unwrap();
    let second = Checkpoint::load(&m2.join("model.ckpt")).unwrap();
    assert_eq!(second.spec, first.spec);
    assert_ne!(second.params, first.params);
}

#[test]
fn presets_resolve_to_the_reference_values() {
    let t = tempfile::tempdir().unwrap();
    let d = gen(&t.path().join("d"), &["--domain", "translated", "--count", "40"]);
    let m = t.path().join("m");
    ok(&["train", "--data", p(&d), "--iterations", "1", "--out", p(&m)]);
    let ckpt = m.join("model.ckpt");

    let l = t.path().join("l");
    ok(&["train-lan", "--model", p(&ckpt), "--data", p(&d), "--iterations", "1", "--out", p(&l)]);
    let lan = manifest(&l, "train-lan").config;
    assert_eq!(lan["preset"], "digits");
    assert_eq!(lan["lan"]["beta"], 5.0);
    assert_eq!(lan["lan"]["noise"]["kind"], "bootstrap");

    let ld = t.path().join("ld");
    ok(&[
        "train-lan", "--model", p(&ckpt), "--data", p(&d), "--iterations", "1", "--scale", "reference", "--out", p(&ld),
    ]);
    assert_eq!(manifest(&ld, "train-lan").config["lan"]["learning_rate"].as_f64().unwrap() as f32, 0.0001);

    let s = t.path().join("s");
    ok(&["sample-mask", "--model", p(&ckpt), "--data", p(&d), "--iterations", "2", "--out", p(&s)]);
    let sm = manifest(&s, "sample-mask").config;
    assert_eq!(sm["preset"], "sample-specific");
    assert_eq!(sm["mask"]["beta"], 50.0);
    assert!(s.join("mask_0.lmask").exists());
}

#[test]
fn document_presets_use_constant_zero_noise() {
    let t = tempfile::tempdir().unwrap();
    let d = gen(&t.path().join("d"), &["--domain", "corpus", "--count", "60"]);
    let m = t.path().join("m");
    ok(&["train", "--data", p(&d), "--iterations", "2", "--out", p(&m)]);
    let ckpt = m.join("model.ckpt");
    let l = t.path().join("l");
    ok(&["train-lan", "--model", p(&ckpt), "--data", p(&d), "--iterations", "1", "--out", p(&l)]);
    let lan = manifest(&l, "train-lan").config;
    assert_eq!(lan["lan"]["beta"], 50.0);
    assert_eq!(lan["lan"]["noise"], serde_json::json!({"kind": "constant", "value": 0.0}));

    let s = t.path().join("s");
    ok(&["sample-mask", "--model", p(&ckpt), "--data", p(&d), "--indices", "0", "--iterations", "2", "--out", p(&s)]);
    let sm = manifest(&s, "sample-mask").config;
    assert_eq!(sm["preset"], "sample-specific-documents");
    assert_eq!(sm["mask"]["iterations"], 2);

    // Top-k over the vocabulary: exactly k rows.
    let r = t.path().join("r");
    let text = ok(&["report", "topk", "--mask", p(&s.join("mask_0.lmask")), "--data", p(&d), "--k", "15", "--out", p(&r)]);
    assert_eq!(text.lines().count(), 16);
    let json: serde_json::Value = serde_json::from_slice(&fs::read(r.join("topk.json")).unwrap()).unwrap();
    assert_eq!(json["entries"].as_array().unwrap().len(), 15);
}

fn write_mask(path: &Path, shape: &[usize], values: Vec<f32>) {
    AttentionMask::new(Tensor::new(shape.to_vec(), values).unwrap())
        .unwrap()
        .save(path)
        .unwrap();
}

fn read_pgm(path: &Path) -> (String, Vec<u8>) {
    let bytes = fs::read(path).unwrap();
    let mut newlines = 0;
    let split = bytes
        .iter()
        .position(|&b| {
            newlines += (b == b'\n') as usize;
            newlines == 3
        })
        .unwrap()
        + 1;
    (String::from_utf8(bytes[..split].to_vec()).unwrap(), bytes[split..].to_vec())
}

#[test]
fn render_quantises_half_up() {
    let t = tempfile::tempdir().unwrap();
    let ones = t.path().join("ones.lmask");
    write_mask(&ones, &[1, 28, 28], vec![1.0; 784]);
    ok(&["render", p(&ones), "--mode", "importance", "--out", p(t.path())]);
    let (header, body) = read_pgm(&t.path().join("ones.pgm"));
    assert_eq!(header, "P5\n28 28\n255\n");
    assert!(body.iter().all(|&b| b == 0));
    assert_eq!(body.len(), 784);

    let half = t.path().join("half.lmask");
    write_mask(&half, &[2, 3], vec![0.5, 0.0, 1.0, 0.25, 0.75, 0.5]);
    let img = t.path().join("half.pgm");
    ok(&["render", p(&half), "--mode", "mask", "-o", p(&img)]);
    let (header, body) = read_pgm(&img);
    assert_eq!(header, "P5\n3 2\n255\n");
    assert_eq!(body, vec![128, 0, 255, 64, 191, 128]);

    let out = lankit(&["render", p(&half), "--mode", "sideways", "-o", p(&img)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn region_report_on_a_cloud_indicator() {
    let t = tempfile::tempdir().unwrap();
    let d = gen(&t.path().join("d"), &["--domain", "tank", "--count", "10", "--seed", "4"]);
    let ds = load_dataset(&d).unwrap();
    let images = ds.images().unwrap();
    let index = images.iter().position(|s| s.label == 1).unwrap();
    let cloud = *images[index].boxes_of(BoxKind::Cloud).next().unwrap();
    // Mask 0 on the cloud (importance 1), 1 elsewhere (importance 0).
    let values = (0..32 * 32)
        .map(|i| {
            let (x, y) = (i % 32, i / 32);
            if (cloud.x0..cloud.x1).contains(&x) && (cloud.y0..cloud.y1).contains(&y) {
                0.0
            } else {
                1.0
            }
        })
        .collect();
    let mask = t.path().join("cloud.lmask");
    write_mask(&mask, &[1, 32, 32], values);
    let r = t.path().join("r");
    ok(&["report", "regions", "--mask", p(&mask), "--data", p(&d), "--index", &index.to_string(), "--out", p(&r)]);
    let json: serde_json::Value = serde_json::from_slice(&fs::read(r.join("regions.json")).unwrap()).unwrap();
    let regions = json["regions"].as_array().unwrap();
    let mean = |name: &str| regions.iter().find(|r| r["region"] == name).unwrap()["mean"].as_f64().unwrap();
    assert_eq!(mean("cloud"), 1.0);
    assert_eq!(mean("tank"), 0.0);
}

#[test]
fn heatmap_report_has_raw_and_normalised_cells() {
    let t = tempfile::tempdir().unwrap();
    let src = gen(&t.path().join("src"), &["--domain", "digits", "--count", "30"]);
    let d = gen(&t.path().join("d"), &["--domain", "translated", "--count", "30"]);
    let m = t.path().join("m");
    ok(&["train", "--data", p(&d), "--iterations", "3", "--out", p(&m)]);
    let r = t.path().join("r");
    ok(&[
        "report", "heatmap", "--model", p(&m.join("model.ckpt")), "--source", p(&src), "--digit-size", "7",
        "--trials", "2", "--out", p(&r),
    ]);
    let json: serde_json::Value = serde_json::from_slice(&fs::read(r.join("heatmap.json")).unwrap()).unwrap();
    let cells = json["cells"].as_array().unwrap();
    // Centres where a 7x7 digit fits: 3..=24 in each axis.
    assert_eq!(cells.len(), 22 * 22);
    for c in cells {
        assert!(c["raw"].is_number() && c["normalized"].is_number());
        let n = c["normalized"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&n));
    }
    let (header, _) = read_pgm(&r.join("heatmap.pgm"));
    assert_eq!(header, "P5\n28 28\n255\n");
}

#[test]
fn config_files_and_output_environment() {
    let t = tempfile::tempdir().unwrap();
    let cfg = t.path().join("cfg.json");
    fs::write(&cfg, r#"{"count": 25, "domain": "tank", "seed": 5}"#).unwrap();
    let out_dir = t.path().join("from-env");
    let status = Command::new(env!("CARGO_BIN_EXE_lankit"))
        .args(["gen-data", "--config", p(&cfg), "--count", "12"])
        .env("LANKIT_OUT", &out_dir)
        .status()
        .unwrap();
    assert!(status.success());
    let ds = load_dataset(&out_dir).unwrap();
    assert_eq!(ds.inputs.len(), 12);
    assert_eq!(ds.manifest.seed, 5);

    // The recorded config hash is the hash of the recorded config.
    let run = manifest(&out_dir, "gen-data");
    assert_eq!(run.config_hash, lankit::cli::config_hash(&run.config));
    assert!(run.outputs.iter().any(|o| o.ends_with("inputs.f32")));

    fs::write(&cfg, r#"{"domain": "tank", "colour": "green"}"#).unwrap();
    let out = lankit(&["gen-data", "--config", p(&cfg), "--out", p(&t.path().join("x"))]);
    assert_eq!(out.status.code(), Some(2));
    let missing = lankit(&["gen-data", "--config", p(&t.path().join("nope.json"))]);
    assert_eq!(missing.status.code(), Some(3));
}

#[test]
fn beta_sweep_and_grid_reports() {
    let t = tempfile::tempdir().unwrap();
    let d = gen(&t.path().join("d"), &["--domain", "translated", "--count", "40"]);
    let m = t.path().join("m");
    ok(&["train", "--data", p(&d), "--iterations", "2", "--out", p(&m)]);
    let ckpt = m.join("model.ckpt");
    let r = t.path().join("r");
    let text = ok(&[
        "report", "beta-sweep", "--model", p(&ckpt), "--data", p(&d), "--betas", "0.5,50", "--iterations", "20",
        "--out", p(&r),
    ]);
    assert_eq!(text.lines().count(), 3);
    assert!(r.join("beta_0.lmask").exists() && r.join("beta_1.lmask").exists());
    let bad = lankit(&["report", "beta-sweep", "--model", p(&ckpt), "--data", p(&d), "--betas", "-1", "--out", p(&r)]);
    assert_eq!(bad.status.code(), Some(2));

    let l = t.path().join("l");
    ok(&["train-lan", "--model", p(&ckpt), "--data", p(&d), "--iterations", "2", "--out", p(&l)]);
    let g = t.path().join("g");
    let text = ok(&["report", "grid", "--lan", p(&l.join("lan.ckpt")), "--data", p(&d), "--out", p(&g)]);
    assert!(text.contains("grid detected"));
    let (header, _) = read_pgm(&g.join("mean-importance.pgm"));
    assert_eq!(header, "P5\n28 28\n255\n");
}
