use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::ptr;

use libc::c_char;
use visreason_ffi::*;

fn core_fixture(path: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(path)
}

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = vr_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

unsafe fn take(s: *mut c_char) -> String {
    let out = CStr::from_ptr(s).to_string_lossy().into_owned();
    vr_string_free(s);
    out
}

#[test]
fn scoring_functions() {
    let mut out = f64::NAN;
    unsafe {
        assert_eq!(vr_relation_weight(2, 0.1, 4, &mut out), VrStatus::Ok);
        assert!((out - 1.2).abs() < 1e-12);
        assert_eq!(vr_relation_weight(20, 0.2, 4, &mut out), VrStatus::Ok);
        assert_eq!(out, 0.0);
        assert_eq!(vr_joint_validity_score(0.9, 0.5, 4, 0.1, 4, &mut out), VrStatus::Ok);
        assert!((out - 0.45).abs() < 1e-12);
        assert_eq!(vr_joint_validity_score(1.5, 0.5, 4, 0.1, 4, &mut out), VrStatus::InvalidArgument);
        assert!(last_error().contains("score_e"));
        assert_eq!(vr_relation_weight(1, 0.1, 0, &mut out), VrStatus::InvalidArgument);
        assert_eq!(vr_relation_weight(1, 0.1, 4, ptr::null_mut()), VrStatus::NullArgument);
    }
}

#[test]
fn loss_and_score_parsing() {
    let mut out = 0.0;
    unsafe {
        let lp = [-0.25, -0.75];
        assert_eq!(vr_distillation_loss(lp.as_ptr(), lp.len(), &mut out), VrStatus::Ok);
        assert_eq!(out, 1.0);
        assert_eq!(vr_distillation_loss(ptr::null(), 0, &mut out), VrStatus::Ok);
        assert_eq!(out, 0.0);
        let bad = [0.5];
        assert_eq!(vr_distillation_loss(bad.as_ptr(), 1, &mut out), VrStatus::InvalidArgument);
        assert!(last_error().contains("log-probability"));

        assert_eq!(vr_parse_score(c("Score: 0.6").as_ptr(), &mut out), VrStatus::Ok);
        assert_eq!(out, 0.6);
        assert_eq!(vr_parse_score(c("no idea").as_ptr(), &mut out), VrStatus::InvalidArgument);
    }
    assert_eq!(unsafe { vr_parse_score(c("1").as_ptr(), &mut out) }, VrStatus::Ok);
    assert!(vr_last_error().is_null(), "a successful call clears the error");
}

#[test]
fn answers_and_references() {
    unsafe {
        let mut s = ptr::null_mut();
        assert_eq!(vr_normalize_answer(c("  The  Red Bus. ").as_ptr(), &mut s), VrStatus::Ok);
        assert_eq!(take(s), "red bus");

        let refs = [c("yes"), c("Yes")];
        let ptrs: Vec<*const c_char> = refs.iter().map(|r| r.as_ptr()).collect();
        let mut matched = false;
        assert_eq!(vr_reference_match(c("YES.").as_ptr(), ptrs.as_ptr(), ptrs.len(), &mut matched), VrStatus::Ok);
        assert!(matched);
        assert_eq!(vr_reference_match(c("no").as_ptr(), ptrs.as_ptr(), ptrs.len(), &mut matched), VrStatus::Ok);
        assert!(!matched);
        assert_eq!(vr_reference_match(c("no").as_ptr(), ptr::null(), 0, &mut matched), VrStatus::Ok);
        assert!(!matched);

        let invalid = [0xffu8, 0];
        assert_eq!(vr_normalize_answer(invalid.as_ptr().cast(), &mut s), VrStatus::InvalidUtf8);
        assert_eq!(vr_normalize_answer(ptr::null(), &mut s), VrStatus::NullArgument);
        vr_string_free(ptr::null_mut());
    }
}

#[test]
fn engine_run_and_replay() {
    let dir = tempfile::tempdir().unwrap();
    let config = c(core_fixture("batch10/config.toml").to_str().unwrap());
    let dataset = c(core_fixture("batch10/dataset.jsonl").to_str().unwrap());
    let out_dir = c(dir.path().to_str().unwrap());
    unsafe {
        let mut engine = ptr::null_mut();
        assert_eq!(vr_engine_open(config.as_ptr(), &mut engine), VrStatus::Ok);
        let mut report = ptr::null_mut();
        assert_eq!(vr_engine_run_batch(engine, dataset.as_ptr(), out_dir.as_ptr(), &mut report), VrStatus::Ok);
        assert_eq!(vr_report_sample_count(report), 10);
        assert_eq!(vr_report_unresolved(report), 1);
        assert_eq!(vr_report_stage_failures(report), 1);
        let mut s = ptr::null_mut();
        assert_eq!(vr_report_accuracy(report, &mut s), VrStatus::Ok);
        assert_eq!(take(s), "80.0");
        assert_eq!(vr_report_to_json(report, &mut s), VrStatus::Ok);
        let json = take(s);
        let on_disk = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
        assert_eq!(on_disk.trim_end(), json);

        let traj = c(dir.path().join("trajectories.jsonl").to_str().unwrap());
        let mut replayed = ptr::null_mut();
        assert_eq!(vr_replay(traj.as_ptr(), &mut replayed), VrStatus::Ok);
        assert_eq!(vr_report_to_json(replayed, &mut s), VrStatus::Ok);
        assert_eq!(take(s), json);

        vr_report_free(replayed);
        vr_report_free(report);
        vr_engine_free(engine);
        vr_engine_free(ptr::null_mut());
        vr_report_free(ptr::null_mut());
        assert_eq!(vr_report_sample_count(ptr::null()), 0);
    }
}

#[test]
fn engine_errors_carry_status_and_message() {
    unsafe {
        let mut engine = ptr::null_mut();
        assert_eq!(vr_engine_open(c("/nonexistent/config.toml").as_ptr(), &mut engine), VrStatus::Usage);
        assert!(engine.is_null());
        assert!(last_error().contains("/nonexistent/config.toml"));

        let mut report = ptr::null_mut();
        assert_eq!(vr_replay(c("/nonexistent/t.jsonl").as_ptr(), &mut report), VrStatus::Runtime);
        assert_eq!(
            vr_engine_run_batch(ptr::null(), c("d").as_ptr(), c("o").as_ptr(), &mut report),
            VrStatus::NullArgument
        );
    }
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/visreason.h")).unwrap();
    for symbol in [
        "typedef struct VrEngine VrEngine;",
        "typedef struct VrReport VrReport;",
        "VR_STATUS_OK = 0",
        "vr_last_error",
        "vr_relation_weight",
        "vr_joint_validity_score",
        "vr_distillation_loss",
        "vr_parse_score",
        "vr_normalize_answer",
        "vr_reference_match",
        "vr_string_free",
        "vr_engine_open",
        "vr_engine_run_batch",
        "vr_engine_free",
        "vr_replay",
        "vr_report_to_json",
        "vr_report_free",
    ] {
        assert!(header.contains(symbol), "header lacks {symbol}");
    }
}

/// Compiles a small C program against the header and static library when a
/// C compiler is available.
#[test]
fn c_program_links_and_runs() {
    let Some(target_dir) = std::env::current_exe().ok().and_then(|p| p.parent()?.parent().map(Path::to_path_buf)) else {
        return;
    };
    let lib = target_dir.join("libvisreason_ffi.a");
    if !lib.exists() || std::process::Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: no C compiler or static library");
        return;
    }
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let status = std::process::Command::new("cc")
        .arg(manifest.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C smoke program failed to build");
    let out = std::process::Command::new(&exe)
        .arg(core_fixture("batch10/config.toml"))
        .arg(core_fixture("batch10/dataset.jsonl"))
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert!(out.status.success(), "exit {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "10 samples, 80.0");
}
