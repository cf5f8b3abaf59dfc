#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use srlang::rng::rng_for;
use srlang::synth::{tagged_text, toy_tagged_corpus, token_text};

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// Writes a toy-grammar corpus into `dir` as tokens.txt / tagged.tsv.
pub fn write_toy_corpus(dir: &Path, tokens: usize, seed: u64) {
    let docs = toy_tagged_corpus(tokens, 500, &mut rng_for(seed, "toy-corpus"));
    std::fs::write(dir.join("tokens.txt"), token_text(&docs)).unwrap();
    std::fs::write(dir.join("tagged.tsv"), tagged_text(&docs)).unwrap();
}

/// Small, fast run configuration over tokens.txt / tagged.tsv in the same
/// directory as the config file.
pub fn small_config() -> Value {
    json!({
        "tokens": "tokens.txt",
        "tagged": "tagged.tsv",
        "output": "out",
        "lowercase": false,
        "max_vocab": 20000,
        "train_mode": "tabular",
        "log_wallclock": false,
        "model": {
            "vocab_size": 1,
            "hidden": 8,
            "trunk_blocks": 1,
            "head_blocks": 2,
            "gammas": [0.2, 0.5, 0.8],
            "window_len": 20,
            "lambda": 0.9,
            "ema_alpha": 0.99,
            "lr": 0.003,
            "lr_min": 0.00001,
            "warmup_steps": 5,
            "weight_decay": 0.00001,
            "batch_size": 16,
            "epochs": 2,
            "grad_clip_norm": 1.0,
            "seed": 7
        },
        "tabular": {"alpha0": 0.5, "kappa": 50.0, "sweeps": 2},
        "analysis": {
            "tags": ["NOUN", "VERB", "ADJ"],
            "per_pos_cap": 200,
            "variance_fraction": 0.9999,
            "target_ks": [3, 10, 500],
            "top_k": 3,
            "resolutions": [3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97],
            "repeats": 10,
            "kmeans_baseline": true
        }
    })
}

pub fn write_config(dir: &Path, config: &Value) -> PathBuf {
    let path = dir.join("run.json");
    std::fs::write(&path, serde_json::to_string_pretty(config).unwrap()).unwrap();
    path
}

pub fn srlang(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_srlang"))
        .args(args)
        .env("SRLANG_LOG", "error")
        .output()
        .expect("binary runs")
}

pub fn run_ok(args: &[&str]) -> Value {
    let out = srlang(args);
    assert!(
        out.status.success(),
        "srlang {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("JSON summary on stdout")
}

/// Every regular file under `dir`, relative path → bytes, sorted by path.
pub fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}
