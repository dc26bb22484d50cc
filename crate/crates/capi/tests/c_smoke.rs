//! Compile and run a real C program against the generated header and the
//! built shared library.

use std::fs;
use std::path::PathBuf;
use std::process::Command;

const C_PROGRAM: &str = r#"
#include <stdio.h>
#include <string.h>
#include "contest.h"

static const char *CONFIG =
    "{\"discount\":0.25,\"step\":0.2,\"outside_option\":0.15,"
    "\"horizon_cap\":120.0,\"replications\":100,\"seed\":17,"
    "\"workers\":[{\"chain\":{\"bad_news\":{\"p0\":0.55,\"lam\":1.0,"
    "\"grid_points\":5,\"delta\":0.2}},\"pi\":\"type\","
    "\"cost\":{\"constant\":0.02},\"prize\":0.6}]}";

int main(void) {
    ContestStatus status;
    double t = contest_tbar(1.0, 1.0, 0.5, 0.1, &status);
    if (status != CONTEST_STATUS_OK) return 1;
    if (t < 0.7259 || t > 0.7260) return 2;

    ContestModel *model = contest_model_from_json(CONFIG, &status);
    if (status != CONTEST_STATUS_OK || model == NULL) return 3;
    if (contest_model_n_workers(model) != 1) return 4;

    double value = contest_envelope_value(model, &status);
    if (status != CONTEST_STATUS_OK || value <= 0.0) return 5;

    char *summary = contest_simulate_summary_json(model, 200, 7, &status);
    if (status != CONTEST_STATUS_OK || summary == NULL) return 6;
    if (strstr(summary, "principal_mean") == NULL) return 7;
    contest_string_free(summary);
    contest_model_free(model);

    contest_model_from_json(NULL, &status);
    if (status != CONTEST_STATUS_INVALID_ARGUMENT) return 8;

    printf("c smoke ok: tbar=%f value=%f\n", t, value);
    return 0;
}
"#;

#[test]
fn c_program_links_and_runs() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let include = manifest.join("include");
    let target = manifest
        .parent()
        .unwrap()
        .parent()
        .unwrap()
        .join("target")
        .join("debug");

    // `cargo test --test c_smoke` does not refresh the cdylib artifact, so
    // build it explicitly (the lock is released while tests run).
    let cargo = std::env::var("CARGO").unwrap_or_else(|_| "cargo".into());
    let build = Command::new(cargo)
        .args(["build", "-p", "contest-capi"])
        .status()
        .expect("cargo builds the cdylib");
    assert!(build.success());

    let lib = target.join("libcontest_capi.so");
    assert!(lib.exists(), "cdylib not built at {}", lib.display());
    assert!(include.join("contest.h").exists(), "header not generated");

    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    let bin = dir.path().join("smoke");
    fs::write(&src, C_PROGRAM).unwrap();

    let compile = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg("-L")
        .arg(&target)
        .arg("-lcontest_capi")
        .arg("-o")
        .arg(&bin)
        .output()
        .expect("cc is available");
    assert!(
        compile.status.success(),
        "compile failed: {}",
        String::from_utf8_lossy(&compile.stderr)
    );

    let run = Command::new(&bin)
        .env("LD_LIBRARY_PATH", &target)
        .output()
        .expect("smoke binary runs");
    assert!(
        run.status.success(),
        "exit {:?}: {}",
        run.status.code(),
        String::from_utf8_lossy(&run.stdout)
    );
    assert!(String::from_utf8_lossy(&run.stdout).contains("c smoke ok"));
}
