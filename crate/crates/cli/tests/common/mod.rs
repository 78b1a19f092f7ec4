//! Helpers for driving the `cratio` binary from tests.

#![allow(dead_code)]

use std::fs;
use std::path::Path;
use std::process::Command;

pub struct Output {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

/// Runs the binary with `args`, with extra environment variables.
pub fn cratio_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_cratio"));
    cmd.args(args).env_remove("CRATIO_THREADS").env("RUST_LOG", "error");
    for (k, v) in env {
        cmd.env(k, v);
    }
    let out = cmd.output().expect("binary runs");
    Output {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

pub fn cratio(args: &[&str]) -> Output {
    cratio_env(args, &[])
}

/// Runs the binary and panics with its stderr unless it succeeds.
pub fn ok(args: &[&str]) -> String {
    let o = cratio(args);
    assert_eq!(o.code, 0, "cratio {args:?} failed: {}", o.stderr);
    o.stdout
}

pub fn write(path: &Path, text: &str) {
    fs::create_dir_all(path.parent().unwrap()).unwrap();
    fs::write(path, text).unwrap();
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A fit configuration over a panel with a two-level wave and a binary covariate.
pub fn fit_config(input: &str, family: &str, extra_model: &str, sampler: &str) -> String {
    format!(
        r#"input = "{input}"
seed = 11

[schema]
n_days = 28

[[schema.covariates]]
name = "wave"
levels = ["1", "2"]

[[schema.covariates]]
name = "x"
levels = ["a", "b"]

[model]
family = "{family}"
{extra_model}
{sampler}"#
    )
}

pub const SHORT_SAMPLER: &str = "[sampler]\nn_chains = 2\nn_iterations = 80\nn_warmup = 40\nthin = 1\n";

/// Deterministic small panel: `n_persons` persons in two waves.
pub fn panel_text(n_persons: usize, days: impl Fn(usize, usize) -> u32) -> String {
    let mut t = String::from("person_id,wave,x,days\n");
    for p in 0..n_persons {
        for w in 0..2 {
            let x = if p % 3 == 0 { "b" } else { "a" };
            t.push_str(&format!("p{p:03},{},{x},{}\n", w + 1, days(p, w)));
        }
    }
    t
}

pub fn mixed_days(p: usize, w: usize) -> u32 {
    [0, 4, 8, 12, 20, 28, 1, 0, 16, 24, 3, 0][(p * 5 + w * 7) % 12]
}
