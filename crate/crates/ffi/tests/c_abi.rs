mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use dialectid::kernel_models::BaseModel;

fn manifest_dir() -> &'static Path {
    Path::new(env!("CARGO_MANIFEST_DIR"))
}

/// Directory holding the compiled library, next to the `deps` folder of
/// this test executable.
fn target_profile_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().and_then(Path::parent).unwrap().to_path_buf()
}

#[test]
fn header_declares_every_exported_function() {
    let header = fs::read_to_string(manifest_dir().join("include/dialectid.h")).unwrap();
    let source = fs::read_to_string(manifest_dir().join("src/lib.rs")).unwrap();
    let exported: Vec<&str> = source
        .lines()
        .filter_map(|l| l.split_once("extern \"C\" fn "))
        .map(|(_, rest)| rest.split('(').next().unwrap())
        .collect();
    assert!(exported.len() >= 15);
    for name in exported {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
    for status in ["DID_STATUS_OK = 0", "DID_STATUS_USAGE = 1", "DID_STATUS_DATA = 2", "DID_STATUS_NUMERICAL = 3"] {
        assert!(header.contains(status), "{status}");
    }
    assert!(header.contains("typedef struct DidKernelModel DidKernelModel;"));
}

#[test]
fn c_program_links_against_static_library() {
    let lib = target_profile_dir().join("libdialectid_ffi.a");
    assert!(lib.exists(), "static library not built at {}", lib.display());
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    if Command::new(&cc).arg("--version").output().is_err() {
        eprintln!("skipping: no C compiler `{cc}` on PATH");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let out = Command::new(&cc)
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(manifest_dir().join("include"))
        .arg(manifest_dir().join("tests/c/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .output()
        .unwrap();
    assert!(out.status.success(), "cc failed:\n{}", String::from_utf8_lossy(&out.stderr));

    let krr = common::kernel_model(dir.path(), BaseModel::Krr);
    let (cnn, _) = common::cnn_model(dir.path());
    let run = Command::new(&exe).arg(&krr).arg(&cnn).output().unwrap();
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(run.status.success(), "{stdout}\n{}", String::from_utf8_lossy(&run.stderr));
    assert!(stdout.contains("kernel 2.0\n"), "{stdout}");
    assert!(stdout.contains("preprocess [casa mare]\n"), "{stdout}");
    assert!(stdout.contains("kernel label RO\n"), "{stdout}");
    assert!(stdout.contains("cnn sum 1.000\n"), "{stdout}");
    assert!(stdout.contains("gradcam 4\n"), "{stdout}");
    assert!(stdout.contains("missing status 2\n"), "{stdout}");
}
