use std::path::{Path, PathBuf};
use std::process::Command;

fn cc() -> Option<String> {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    Command::new(&cc)
        .arg("--version")
        .output()
        .ok()?
        .status
        .success()
        .then_some(cc)
}

fn include_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include")
}

#[test]
fn header_is_current() {
    let h = std::fs::read_to_string(include_dir().join("ecsvc.h")).unwrap();
    let src = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("src/lib.rs")).unwrap();
    for line in src.lines() {
        if let Some(rest) = line.split("extern \"C\" fn ").nth(1) {
            let name = rest.split('(').next().unwrap();
            assert!(h.contains(&format!("{name}(")), "{name} missing from header");
        }
    }
}

#[test]
fn header_compiles_as_c99() {
    let Some(cc) = cc() else {
        eprintln!("no C compiler, skipping");
        return;
    };
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("t.c");
    std::fs::write(
        &src,
        "#include \"ecsvc.h\"\nint main(void) { return ECSVC_ERROR_OK; }\n",
    )
    .unwrap();
    let st = Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-pedantic", "-fsyntax-only", "-I"])
        .arg(include_dir())
        .arg(&src)
        .status()
        .unwrap();
    assert!(st.success());
}

/// Links a small C program against the static library built for this test run.
#[test]
fn c_program_links_and_runs() {
    let Some(cc) = cc() else {
        eprintln!("no C compiler, skipping");
        return;
    };
    let exe = std::env::current_exe().unwrap();
    let lib = exe.parent().and_then(Path::parent).unwrap().join("libecsvc_ffi.a");
    if !lib.exists() {
        eprintln!("{} not built, skipping", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    std::fs::write(
        &src,
        r#"#include <stdio.h>
#include <string.h>
#include "ecsvc.h"

int main(void) {
    const char *cfg = "[group]\npreset = \"tiny\"\n[costs]\nextrapolate = true\n"
                      "[nodes]\nn_sys_att = 4\nn_rx_att = 2\nreceivers_per_sender = 2\n";
    EcsvcScenario *s = NULL;
    EcsvcResult *r = NULL;
    EcsvcRunStatus st;
    char buf[4096];
    size_t need = 0;
    if (ecsvc_scenario_from_toml(cfg, &s) != ECSVC_ERROR_OK) return 1;
    if (ecsvc_run(s, &r) != ECSVC_ERROR_OK) return 2;
    if (ecsvc_result_status(r, &st) != ECSVC_ERROR_OK || st != ECSVC_RUN_STATUS_OK) return 3;
    if (ecsvc_result_csv(r, buf, sizeof buf, &need) != ECSVC_ERROR_OK) return 4;
    if (strncmp(buf, "name,seed", 9) != 0) return 5;
    printf("%.6f\n", ecsvc_result_total_time_s(r));
    ecsvc_result_free(r);
    ecsvc_scenario_free(s);
    return 0;
}
"#,
    )
    .unwrap();
    let bin = dir.path().join("smoke");
    let st = Command::new(cc)
        .arg("-I")
        .arg(include_dir())
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(st.success(), "link failed");
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    let t: f64 = String::from_utf8(out.stdout).unwrap().trim().parse().unwrap();
    assert!(t > 0.0);
}
