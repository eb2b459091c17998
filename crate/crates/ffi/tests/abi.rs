use std::ffi::{CStr, CString};
use std::path::Path;
use std::ptr;

use lankit::lan::AttentionMask;
use lankit::nn::{Activation, Checkpoint, LayerSpec, NetworkSpec};
use lankit::Tensor;
use lankit_ffi::*;

fn cpath(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    let p = lk_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned()
}

fn tiny_classifier(dir: &Path) -> std::path::PathBuf {
    let spec = NetworkSpec::new(
        vec![4],
        vec![LayerSpec::fc(6, Activation::LeakyRelu), LayerSpec::fc(3, Activation::Softmax)],
    );
    let path = dir.join("tiny.ckpt");
    Checkpoint::initialize(spec, 1).unwrap().save(&path).unwrap();
    path
}

#[test]
fn classifier_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let path = tiny_classifier(dir.path());
    let mut h = ptr::null_mut();
    unsafe {
        assert_eq!(lk_classifier_load(cpath(&path).as_ptr(), &mut h), LkStatus::Ok);
        assert_eq!(lk_classifier_input_len(h), 4);
        assert_eq!(lk_classifier_classes(h), 3);
        let x = [0.1f32, 0.2, 0.3, 0.4];
        let mut p = [0.0f32; 3];
        assert_eq!(lk_classifier_predict(h, x.as_ptr(), 4, p.as_mut_ptr(), 3), LkStatus::Ok);
        assert!((p.iter().sum::<f32>() - 1.0).abs() < 1e-5);
        let ckpt = Checkpoint::load(&path).unwrap();
        let want = ckpt.forward(&Tensor::new(vec![4], x.to_vec()).unwrap()).unwrap();
        assert_eq!(&p[..], want.data());

        assert_eq!(lk_classifier_predict(h, x.as_ptr(), 3, p.as_mut_ptr(), 3), LkStatus::InvalidArgument);
        assert!(last_error().contains("expected 4"));
        lk_classifier_free(h);
    }
}

#[test]
fn bad_files_report_io_status() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.ckpt");
    std::fs::write(&bad, b"definitely not a checkpoint").unwrap();
    let mut h = ptr::null_mut();
    unsafe {
        assert_eq!(lk_classifier_load(cpath(&bad).as_ptr(), &mut h), LkStatus::Io);
        assert!(h.is_null());
        assert!(last_error().contains("bad magic"));
        let missing = dir.path().join("missing.ckpt");
        assert_eq!(lk_classifier_load(cpath(&missing).as_ptr(), &mut h), LkStatus::Io);
        assert_eq!(lk_classifier_load(ptr::null(), &mut h), LkStatus::InvalidArgument);
    }
}

#[test]
fn mask_files_and_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.lmask");
    AttentionMask::new(Tensor::new(vec![4], vec![0.0, 1.0, 0.5, 0.25]).unwrap())
        .unwrap()
        .save(&path)
        .unwrap();
    let mut m = ptr::null_mut();
    unsafe {
        assert_eq!(lk_mask_load(cpath(&path).as_ptr(), &mut m), LkStatus::Ok);
        assert_eq!(lk_mask_len(m), 4);
        assert!((lk_mask_mean(m) - 0.4375).abs() < 1e-6);
        let mut imp = [0.0f32; 4];
        assert_eq!(lk_mask_copy(m, true, imp.as_mut_ptr(), 4), LkStatus::Ok);
        assert_eq!(imp, [1.0, 0.0, 0.5, 0.75]);

        let x = [1.0f32, 1.0, 1.0, 1.0];
        let eta = [0.0f32, 0.0, 0.0, 0.0];
        let mut y = [9.0f32; 4];
        assert_eq!(lk_corrupt(m, x.as_ptr(), eta.as_ptr(), y.as_mut_ptr(), 4), LkStatus::Ok);
        assert_eq!(y, [1.0, 0.0, 0.5, 0.75]);

        let copy = dir.path().join("copy.lmask");
        assert_eq!(lk_mask_save(m, cpath(&copy).as_ptr()), LkStatus::Ok);
        assert_eq!(std::fs::read(&copy).unwrap(), std::fs::read(&path).unwrap());
        lk_mask_free(m);
        assert!(lk_mask_mean(ptr::null()).is_nan());
    }
}

#[test]
fn sample_mask_through_the_abi() {
    let dir = tempfile::tempdir().unwrap();
    let path = tiny_classifier(dir.path());
    let mut h = ptr::null_mut();
    let mut m = ptr::null_mut();
    let cfg = LkSampleMaskConfig {
        beta: 1.0,
        learning_rate: 0.05,
        iterations: 50,
        noise_samples: 1,
        seed: 3,
        noise_kind: LkNoiseKind::Bootstrap,
        noise_a: 0.0,
        noise_b: 0.0,
    };
    let x = [0.5f32, -0.5, 1.0, 0.0];
    let pool = [0.0f32, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0];
    unsafe {
        assert_eq!(lk_classifier_load(cpath(&path).as_ptr(), &mut h), LkStatus::Ok);
        assert_eq!(lk_sample_mask(h, x.as_ptr(), 4, pool.as_ptr(), 2, &cfg, &mut m), LkStatus::Ok);
        assert_eq!(lk_mask_len(m), 4);
        let mean = lk_mask_mean(m);
        assert!((0.0..=1.0).contains(&mean));
        lk_mask_free(m);

        // Bootstrap noise without a pool is a contract error.
        assert_eq!(lk_sample_mask(h, x.as_ptr(), 4, ptr::null(), 0, &cfg, &mut m), LkStatus::Config);
        assert!(last_error().contains("bootstrap"));
        lk_classifier_free(h);
    }
}

#[test]
fn attention_network_masks() {
    let dir = tempfile::tempdir().unwrap();
    let spec = NetworkSpec::new(vec![4], vec![LayerSpec::fc(4, Activation::Sigmoid)]);
    let path = dir.path().join("lan.ckpt");
    let ckpt = Checkpoint::initialize(spec, 2).unwrap();
    ckpt.save(&path).unwrap();
    let x = [0.3f32, 0.1, -0.2, 0.9];
    let want = ckpt.forward(&Tensor::new(vec![4], x.to_vec()).unwrap()).unwrap();
    let mut lan = ptr::null_mut();
    let mut m = ptr::null_mut();
    unsafe {
        assert_eq!(lk_lan_load(cpath(&path).as_ptr(), &mut lan), LkStatus::Ok);
        assert_eq!(lk_lan_mask(lan, x.as_ptr(), 4, &mut m), LkStatus::Ok);
        let mut got = [0.0f32; 4];
        assert_eq!(lk_mask_copy(m, false, got.as_mut_ptr(), 4), LkStatus::Ok);
        for (g, w) in got.iter().zip(want.data()) {
            assert!((g - w).abs() < 1e-6);
        }
        lk_mask_free(m);
        lk_lan_free(lan);

        // A softmax classifier is not an attention network.
        let clf = tiny_classifier(dir.path());
        assert_eq!(lk_lan_load(cpath(&clf).as_ptr(), &mut lan), LkStatus::Config);
    }
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/lankit.h")).unwrap();
    for name in [
        "lk_last_error",
        "lk_classifier_load",
        "lk_classifier_predict",
        "lk_lan_mask",
        "lk_sample_mask",
        "lk_mask_copy",
        "lk_corrupt",
        "typedef struct LkMask LkMask;",
        "LK_STATUS_IO = 3",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}

#[test]
fn header_compiles_as_c() {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"lankit.h\"\nint main(void) { LkMask *m = 0; return (int)lk_mask_len(m); }\n",
    )
    .unwrap();
    let status = std::process::Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/include"))
        .arg(&src)
        .status()
        .expect("a C compiler is installed");
    assert!(status.success());
}
