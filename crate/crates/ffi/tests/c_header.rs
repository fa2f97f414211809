//! Compiles and runs a small C program against the generated header and the
//! static library.

use std::path::{Path, PathBuf};
use std::process::Command;

const PROGRAM: &str = r#"
#include <stdio.h>
#include <string.h>
#include "covlearn.h"

int main(void) {
    double tau[3] = {1.0, 0.5, 0.25}, pose[3], back[3];
    if (covlearn_se2_exp(tau, pose) != COVLEARN_STATUS_OK) return 1;
    if (covlearn_se2_log(pose, back) != COVLEARN_STATUS_OK) return 2;
    for (int k = 0; k < 3; ++k)
        if (back[k] - tau[k] > 1e-12 || tau[k] - back[k] > 1e-12) return 3;

    CovlearnDataset *ds = NULL;
    const char *spec = "{\"id\":\"D2\",\"seed\":1,\"length\":8,\"train\":1,\"test\":1}";
    if (covlearn_dataset_generate(spec, &ds) != COVLEARN_STATUS_OK) return 4;
    size_t train = 0, test = 0;
    covlearn_dataset_sizes(ds, &train, &test);
    if (train != 1 || test != 1) return 5;

    CovlearnDataset *none = NULL;
    if (covlearn_dataset_from_json("{", &none) != COVLEARN_STATUS_DATA_ERROR) return 6;
    if (covlearn_last_error_message() == NULL) return 7;
    covlearn_dataset_free(ds);
    puts("ok");
    return 0;
}
"#;

fn target_dir() -> PathBuf {
    // <target>/<profile>/deps/<test binary>
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn c_program_links_and_runs() {
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let lib = target_dir().join("libcovlearn_ffi.a");
    assert!(lib.exists(), "static library missing at {}", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    let bin = dir.path().join("main");
    std::fs::write(&src, PROGRAM).unwrap();
    let status = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-I"])
        .arg(manifest.join("include"))
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .expect("C compiler available");
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "ok");
}
