#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

/// Runs the `mstates` binary with a private cache directory.
pub fn mstates(args: &[&str], cache: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mstates"))
        .args(args)
        .env("MS_CACHE_DIR", cache)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

/// Like [`mstates`] but panics with stderr on a non-zero exit.
pub fn mstates_ok(args: &[&str], cache: &Path) -> Output {
    let out = mstates(args, cache);
    assert!(
        out.status.success(),
        "mstates {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn stderr_line(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let last = text.lines().last().expect("stderr has a line");
    serde_json::from_str(last).expect("error line is JSON")
}

pub fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 path")
}
