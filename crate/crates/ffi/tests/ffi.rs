use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use csod_core::synth::{generate, SynthSpec};
use csod_core::{run, Method, SelectionConfig, SelectionResult};
use csod_ffi::*;

struct Files {
    _dir: tempfile::TempDir,
    manifest: PathBuf,
    features: PathBuf,
}

fn files() -> Files {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("m.json");
    let features = dir.path().join("f.bin");
    generate(&SynthSpec::gaussian_mixture(3, 50, 6, 2, 0.3, 4))
        .unwrap()
        .write(&manifest, &features, None)
        .unwrap();
    Files {
        _dir: dir,
        manifest,
        features,
    }
}

fn cstr(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn load(f: &Files) -> *mut CsodDataset {
    let mut ds = ptr::null_mut();
    let status = unsafe { csod_dataset_load(cstr(&f.manifest).as_ptr(), cstr(&f.features).as_ptr(), &mut ds) };
    assert_eq!(status, CsodStatus::Ok);
    ds
}

fn options(n: usize) -> CsodSelectOptions {
    CsodSelectOptions {
        target_count: n,
        lambda: f64::NAN,
        seed: 0,
        presample_per_class: 0,
        objectwise: false,
    }
}

fn last_error() -> String {
    let p = csod_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn select_matches_the_library() {
    let f = files();
    let ds = load(&f);
    unsafe {
        assert_eq!(csod_dataset_num_images(ds), 50);
        assert_eq!(csod_dataset_num_classes(ds), 3);
        assert_eq!(csod_dataset_dim(ds), 6);
        assert!(csod_dataset_num_objects(ds) >= 50);
    }
    let core = csod_core::Dataset::load(&f.manifest, &f.features).unwrap();
    for (method, excluded) in [
        ("csod", vec![]),
        ("herding", vec![0usize, 3, 9]),
        ("random-uniform", vec![1]),
    ] {
        let mut sel = ptr::null_mut();
        let name = CString::new(method).unwrap();
        let status = unsafe {
            csod_select(
                ds,
                name.as_ptr(),
                &options(10),
                excluded.as_ptr(),
                excluded.len(),
                &mut sel,
            )
        };
        assert_eq!(status, CsodStatus::Ok);
        let mut ids = [0usize; 32];
        let n = unsafe { csod_selection_ids(sel, ids.as_mut_ptr(), ids.len()) };
        assert_eq!(n, unsafe { csod_selection_len(sel) });
        let want = run(
            &core,
            method.parse::<Method>().unwrap(),
            &SelectionConfig::new(10).with_excluded(excluded),
        )
        .unwrap();
        assert_eq!(&ids[..n], want.selected_image_ids.as_slice());
        let mut json = ptr::null_mut();
        assert_eq!(unsafe { csod_selection_to_json(sel, &mut json) }, CsodStatus::Ok);
        let bytes = unsafe { CStr::from_ptr(json) }.to_bytes().to_vec();
        assert_eq!(bytes, want.to_json().unwrap());
        assert_eq!(
            SelectionResult::from_json(&bytes).unwrap().selected_image_ids,
            want.selected_image_ids
        );
        unsafe {
            assert!(!csod_selection_is_partial(sel));
            csod_string_free(json);
            csod_selection_free(sel);
        }
    }
    let mut cov = 0.0;
    let ids = [0usize, 1, 2];
    assert_eq!(
        unsafe { csod_coverage_objective(ds, ids.as_ptr(), 3, &mut cov) },
        CsodStatus::Ok
    );
    assert!((cov - csod_core::metrics::coverage_objective(&ids, &core).unwrap()).abs() < 1e-15);
    unsafe { csod_dataset_free(ds) };
}

#[test]
fn errors_map_to_status_codes() {
    let f = files();
    let mut ds = ptr::null_mut();
    let missing = CString::new("/nonexistent.json").unwrap();
    let status = unsafe { csod_dataset_load(missing.as_ptr(), cstr(&f.features).as_ptr(), &mut ds) };
    assert_eq!(status, CsodStatus::Io);
    assert!(!last_error().is_empty());
    assert_eq!(
        unsafe { csod_dataset_load(ptr::null(), cstr(&f.features).as_ptr(), &mut ds) },
        CsodStatus::NullPointer
    );
    let garbage = f.manifest.with_extension("bad");
    std::fs::write(&garbage, b"{not json").unwrap();
    let status = unsafe { csod_dataset_load(cstr(&garbage).as_ptr(), cstr(&f.features).as_ptr(), &mut ds) };
    assert_eq!(status, CsodStatus::Format);

    let ds = load(&f);
    let mut sel = ptr::null_mut();
    let name = CString::new("csod").unwrap();
    let status = unsafe { csod_select(ds, name.as_ptr(), &options(500), ptr::null(), 0, &mut sel) };
    assert_eq!(status, CsodStatus::InvalidArgument);
    assert!(!last_error().is_empty());
    let bogus = CString::new("bogus").unwrap();
    let status = unsafe { csod_select(ds, bogus.as_ptr(), &options(5), ptr::null(), 0, &mut sel) };
    assert_eq!(status, CsodStatus::InvalidArgument);
    let status = unsafe { csod_select(ds, name.as_ptr(), ptr::null(), ptr::null(), 0, &mut sel) };
    assert_eq!(status, CsodStatus::NullPointer);
    let status = unsafe { csod_select(ds, name.as_ptr(), &options(5), ptr::null(), 2, &mut sel) };
    assert_eq!(status, CsodStatus::NullPointer);
    unsafe {
        assert_eq!(csod_selection_len(ptr::null()), 0);
        assert_eq!(csod_dataset_num_images(ptr::null()), 0);
        csod_selection_free(ptr::null_mut());
        csod_dataset_free(ds);
    }
}

#[test]
fn numeric_helpers() {
    let a = [1.0f32, 1.0];
    let b = [1.0f32, 0.0];
    let mut out = 0.0;
    assert_eq!(
        unsafe { csod_cosine(a.as_ptr(), b.as_ptr(), 2, &mut out) },
        CsodStatus::Ok
    );
    assert!((out - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-6);
    let z = [0.0f32, 0.0];
    assert_eq!(
        unsafe { csod_cosine(a.as_ptr(), z.as_ptr(), 2, &mut out) },
        CsodStatus::Validation
    );
    let (p, q) = ([0.5, 0.5], [0.25, 0.75]);
    assert_eq!(
        unsafe { csod_kl_divergence(p.as_ptr(), q.as_ptr(), 2, &mut out) },
        CsodStatus::Ok
    );
    assert!((out - 0.1438).abs() < 1e-3);
    assert_eq!(
        unsafe { csod_kl_divergence(p.as_ptr(), q.as_ptr(), 2, ptr::null_mut()) },
        CsodStatus::NullPointer
    );
    assert_eq!(csod_default_lambda(100), 0.025);
    assert_eq!(csod_default_lambda(1000), 0.125);
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/csod.h")).unwrap();
    for name in [
        "csod_last_error_message",
        "csod_dataset_load",
        "csod_dataset_free",
        "csod_dataset_num_images",
        "csod_dataset_num_objects",
        "csod_dataset_num_classes",
        "csod_dataset_dim",
        "csod_default_lambda",
        "csod_select",
        "csod_selection_free",
        "csod_selection_len",
        "csod_selection_is_partial",
        "csod_selection_ids",
        "csod_selection_to_json",
        "csod_string_free",
        "csod_cosine",
        "csod_kl_divergence",
        "csod_coverage_objective",
        "CSOD_STATUS_RETRY_EXHAUSTED = 6",
        "typedef struct CsodDataset CsodDataset;",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}

/// Compiles a small C program against the header and the static library.
/// Skipped when no C compiler is on the path.
#[test]
fn c_program_links_and_selects() {
    let Ok(cc) = which_cc() else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    let deps = std::env::current_exe().unwrap().parent().unwrap().to_path_buf();
    let lib = deps.join("libcsod_ffi.a");
    assert!(lib.exists(), "missing {}", lib.display());
    let f = files();
    let exe = f.manifest.with_file_name("smoke");
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let status = Command::new(cc)
        .arg("-std=c99")
        .arg("-I")
        .arg(root.join("include"))
        .arg(root.join("tests/c/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&exe).arg(&f.manifest).arg(&f.features).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let core = csod_core::Dataset::load(&f.manifest, &f.features).unwrap();
    let want = run(&core, Method::Csod, &SelectionConfig::new(5)).unwrap();
    let text: Vec<String> = want.selected_image_ids.iter().map(|i| i.to_string()).collect();
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), text.join(" "));
}

fn which_cc() -> Result<&'static str, ()> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|cc| {
            Command::new(cc)
                .arg("--version")
                .output()
                .is_ok_and(|o| o.status.success())
        })
        .ok_or(())
}
