//! The generated header must compile as C and as C++ against a small
//! program exercising every declaration.

use std::path::Path;
use std::process::Command;

fn compiler(name: &str) -> Option<&str> {
    Command::new(name).arg("--version").output().ok().map(|_| name)
}

#[test]
fn header_compiles() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = dir.join("include/voqa.h");
    assert!(header.exists(), "header not generated");
    let text = std::fs::read_to_string(&header).unwrap();
    for symbol in ["voqa_composite_watermark", "voqa_filter_response", "voqa_last_error", "VOQA_STATUS_OK"] {
        assert!(text.contains(symbol), "{symbol} missing from header");
    }
    let src = dir.join("tests/smoke.c");
    for (cc, lang) in [("cc", "c"), ("c++", "c++")] {
        let Some(cc) = compiler(cc) else {
            eprintln!("{cc} not found; skipping {lang} syntax check");
            continue;
        };
        let out = Command::new(cc)
            .args(["-fsyntax-only", "-Wall", "-Werror", "-x", lang, "-I"])
            .arg(dir.join("include"))
            .arg(&src)
            .output()
            .unwrap();
        assert!(out.status.success(), "{lang}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

/// Links the smoke program against the static library when cargo has built
/// it next to this test binary.
#[test]
fn smoke_program_runs() {
    let exe = std::env::current_exe().unwrap();
    let lib = exe.parent().and_then(Path::parent).map(|d| d.join("libvoqa_ffi.a"));
    let Some(lib) = lib.filter(|l| l.exists()) else {
        eprintln!("static library not found; skipping link test");
        return;
    };
    let Some(cc) = compiler("cc") else {
        eprintln!("cc not found; skipping link test");
        return;
    };
    let dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let tmp = tempfile::tempdir().unwrap();
    let bin = tmp.path().join("smoke");
    let out = Command::new(cc)
        .arg("-I")
        .arg(dir.join("include"))
        .arg(dir.join("tests/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .output()
        .unwrap();
    assert!(out.status.success(), "link: {}", String::from_utf8_lossy(&out.stderr));
    let run = Command::new(&bin).output().unwrap();
    assert!(run.status.success());
    let stdout = String::from_utf8(run.stdout).unwrap();
    assert!(stdout.contains(r#""bbox":[0,0,16,16]"#), "{stdout}");
    assert!(stdout.contains("red 1"), "{stdout}");
}
