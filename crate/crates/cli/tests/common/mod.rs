#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const BIN: &str = env!("CARGO_BIN_EXE_handsynth");

pub fn handsynth(out: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .arg("--out-dir")
        .arg(out)
        .args(args)
        .env_remove("HANDSYNTH_OUT_DIR")
        .env_remove("HANDSYNTH_THREADS")
        .output()
        .expect("binary runs")
}

/// Runs and insists on exit code 0.
pub fn ok(out: &Path, args: &[&str]) -> Output {
    let o = handsynth(out, args);
    assert!(
        o.status.success(),
        "handsynth {args:?} exited with {:?}\nstderr: {}",
        o.status.code(),
        String::from_utf8_lossy(&o.stderr)
    );
    o
}

pub const SHORT_FIT: &str = r#"{
  "coarse": {"lrRot": 1.0, "lrTrans": 1.0, "epochs": 1, "itersPerEpoch": 200, "lambdaVert": 0.1},
  "fine": {"lrPose": 1e-3, "lrShape": 1e-3, "lrRot": 1e-2, "lrTrans": 1e-2, "epochs": 1,
           "itersPerEpoch": 200, "lambdaPose": 50.0, "lambdaShape": 50.0},
  "schedule": {"decayEvery": 100, "decayFactor": 10.0}
}"#;

pub const SMALL_PRIOR: &str = r#"{"batchSize": 32, "learningRate": 1e-3, "epochs": 3, "lambdaKL": 0.01,
  "maskRate": 0.25, "seed": 0, "latentDim": 8, "hiddenDim": 32}"#;

pub fn run_pipeline(root: &Path, seed: u64) -> PathBuf {
    run_pipeline_with(root, seed, SHORT_FIT, 3)
}

/// build-asset → toy-data → fit → label-occlusion → train-prior → refine →
/// evaluate, plus augment and compose over the toy manifest. Returns the
/// output directory.
pub fn run_pipeline_with(root: &Path, seed: u64, fit_config: &str, count: usize) -> PathBuf {
    let out = root.join("out");
    std::fs::create_dir_all(&out).unwrap();
    let fit_cfg = root.join("fit.json");
    let prior_cfg = root.join("prior_cfg.json");
    std::fs::write(&fit_cfg, fit_config).unwrap();
    std::fs::write(&prior_cfg, SMALL_PRIOR).unwrap();
    let p = |name: &str| out.join(name).to_string_lossy().into_owned();
    let seed = seed.to_string();
    let count = count.to_string();
    let s = |args: &[&str]| {
        let mut v = vec!["--seed", seed.as_str()];
        v.extend_from_slice(args);
        ok(&out, &v);
    };
    s(&["build-asset", "--carpal"]);
    s(&[
        "toy-data",
        "--model",
        &p("model.json"),
        "--count",
        &count,
        "--prior-poses",
        "256",
        "--image-size",
        "64",
    ]);
    s(&[
        "fit",
        "--model",
        &p("model.json"),
        "--manifest",
        &p("manifest.jsonl"),
        "--config",
        &fit_cfg.to_string_lossy(),
    ]);
    s(&[
        "label-occlusion",
        "--model",
        &p("model.json"),
        "--manifest",
        &p("manifest.jsonl"),
    ]);
    s(&[
        "train-prior",
        "--poses",
        &p("prior_poses.jsonl"),
        "--config",
        &prior_cfg.to_string_lossy(),
    ]);
    s(&[
        "refine",
        "--prior",
        &p("prior.json"),
        "--predictions",
        &p("predictions.jsonl"),
        "--labels",
        &p("labels.jsonl"),
        "--model",
        &p("model.json"),
    ]);
    s(&[
        "evaluate",
        "--predictions",
        &p("refined.jsonl"),
        "--ground-truth",
        &p("ground_truth.jsonl"),
        "--labels",
        &p("labels.jsonl"),
    ]);
    s(&["augment", "--manifest", &p("manifest.jsonl")]);
    s(&["compose", "--manifest", &p("manifest.jsonl")]);
    out
}

/// Every file under `dir`, relative path and contents, sorted.
pub fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_path_buf();
                out.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}
