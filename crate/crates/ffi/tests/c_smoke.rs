//! Compiles a small C program against the generated header and the static
//! library, then runs it.

use std::env;
use std::path::{Path, PathBuf};
use std::process::Command;

fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

/// Directory holding this test binary, where cargo also places the crate's
/// static library.
fn deps_dir() -> PathBuf {
    env::current_exe().unwrap().parent().unwrap().to_path_buf()
}

fn compiler() -> String {
    env::var("CC").unwrap_or_else(|_| "cc".into())
}

#[test]
fn header_lists_every_export() {
    let header = std::fs::read_to_string(manifest_dir().join("include/roadmark.h")).unwrap();
    let source = std::fs::read_to_string(manifest_dir().join("src/lib.rs")).unwrap();
    let exports: Vec<&str> = source
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 15, "{exports:?}");
    for name in exports {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
    for handle in ["RmCloud", "RmConfig", "RmFrameResult"] {
        assert!(
            header.contains(&format!("typedef struct {handle} {handle};")),
            "{handle} is not opaque"
        );
    }
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let include = manifest_dir().join("include");
    for (lang, std) in [("c", "-std=c11"), ("c++", "-std=c++17")] {
        let status = Command::new(compiler())
            .args(["-x", lang, std, "-fsyntax-only", "-Wall", "-Werror", "-I"])
            .arg(&include)
            .arg(manifest_dir().join("include/roadmark.h"))
            .status()
            .expect("C compiler available");
        assert!(status.success(), "header does not compile as {lang}");
    }
}

fn static_lib(dir: &Path) -> PathBuf {
    let lib = dir.join("libroadmark_ffi.a");
    assert!(lib.exists(), "static library not found at {}", lib.display());
    lib
}

#[test]
fn c_program_runs_pipeline() {
    let out = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("rm_smoke");
    let status = Command::new(compiler())
        .args(["-std=c11", "-O1", "-Wall", "-Werror", "-I"])
        .arg(manifest_dir().join("include"))
        .arg(manifest_dir().join("tests/c/smoke.c"))
        .arg(static_lib(&deps_dir()))
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&out)
        .status()
        .expect("C compiler available");
    assert!(status.success(), "smoke program failed to build");
    let run = Command::new(&out).output().unwrap();
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(
        run.status.success(),
        "exit {:?}\n{stdout}\n{}",
        run.status,
        String::from_utf8_lossy(&run.stderr)
    );
    assert!(stdout.starts_with("version "), "{stdout}");
}
