//! Compiles `tests/c/smoke.c` against the generated header and the static
//! library, then runs it. Skipped when no C compiler is available.

use std::path::{Path, PathBuf};
use std::process::Command;

fn static_lib() -> Option<PathBuf> {
    // target/<profile>/deps/<test binary> -> target/<profile>/libtscond_ffi.a
    let exe = std::env::current_exe().ok()?;
    let lib = exe.parent()?.parent()?.join("libtscond_ffi.a");
    lib.is_file().then_some(lib)
}

#[test]
fn c_program_links_and_runs() {
    let crate_dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = crate_dir.join("include/tscond.h");
    assert!(header.is_file(), "header not generated");

    let Some(lib) = static_lib() else {
        eprintln!("static library not built; skipping");
        return;
    };
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    if Command::new(&cc).arg("--version").output().is_err() {
        eprintln!("no C compiler; skipping");
        return;
    }
    let out = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("tscond_smoke");
    let status = Command::new(&cc)
        .arg("-std=c11")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(crate_dir.join("include"))
        .arg(crate_dir.join("tests/c/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success(), "C compile failed");
    let run = Command::new(&out).output().unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(String::from_utf8_lossy(&run.stdout).starts_with("experts=2 "));
}
