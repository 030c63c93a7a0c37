//! Compiles a small C program against the generated header and the static
//! library, then runs it.

use std::path::PathBuf;
use std::process::Command;

const PROGRAM: &str = r#"
#include <stdio.h>
#include "ems_bench.h"

int main(void) {
    EmsTariff *t = NULL;
    if (ems_tariff_new(&t) != EMS_STATUS_OK) return 10;
    double eo[1] = {1.0}, ei[1] = {0.0}, vd[1] = {0.1};
    EmsCost c;
    if (ems_tariff_cost(t, "2024-04-01T00:00", eo, ei, vd, 1, false, &c) != EMS_STATUS_OK) return 11;
    ems_tariff_free(t);
    uint8_t sched[192];
    if (ems_schedule_generate(1, sched, sizeof sched) != EMS_STATUS_OK) return 12;
    if (ems_tariff_cost(NULL, NULL, NULL, NULL, NULL, 0, false, &c) != EMS_STATUS_NULL_POINTER) return 13;
    char msg[64];
    size_t n = ems_last_error(msg, sizeof msg);
    printf("%.6f %zu %s\n", c.offtake_extras, n, msg);
    return 0;
}
"#;

#[test]
fn c_program_links_and_runs() {
    let exe = std::env::current_exe().unwrap();
    // target/<profile>/deps/<test> -> target/<profile>
    let profile_dir = exe.parent().and_then(|p| p.parent()).unwrap().to_path_buf();
    let lib = profile_dir.join("libems_bench_ffi.a");
    assert!(lib.exists(), "static library not built at {}", lib.display());
    let include = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    let dir = tempfile_dir();
    let src = dir.join("main.c");
    let bin = dir.join("main");
    std::fs::write(&src, PROGRAM).unwrap();
    let status = Command::new("cc")
        .arg("-std=c11")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(&include)
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .expect("a C compiler on PATH");
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.trim(), "0.114000 14 tariff is null");
    let _ = std::fs::remove_dir_all(&dir);
}

fn tempfile_dir() -> PathBuf {
    let d = std::env::temp_dir().join(format!("ems-bench-ffi-{}", std::process::id()));
    std::fs::create_dir_all(&d).unwrap();
    d
}
