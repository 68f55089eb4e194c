//! In-process drivers for the acceptance suite.

use std::path::{Path, PathBuf};

use clap::Parser;
use handsynth_cli::args::Cli;

/// Small prior config for pipeline runs: a few epochs of a narrow network.
pub const SMALL_PRIOR: &str = r#"{"batchSize": 32, "learningRate": 1e-3, "epochs": 3, "lambdaKL": 0.01,
  "maskRate": 0.25, "seed": 0, "latentDim": 8, "hiddenDim": 32}"#;

/// Runs one `handsynth` invocation in this process and insists on exit code 0.
pub fn handsynth(out: &Path, args: &[&str]) -> Result<(), String> {
    let out = out.to_string_lossy();
    let argv = ["handsynth", "--out-dir", &out].into_iter().chain(args.iter().copied());
    let cli = Cli::try_parse_from(argv).map_err(|e| e.to_string())?;
    match handsynth_cli::run(cli) {
        Ok(0) => Ok(()),
        Ok(code) => Err(format!("handsynth {args:?} exited with {code}")),
        Err(e) => Err(format!("handsynth {args:?} failed: {e:#}")),
    }
}

/// build-asset → toy-data → fit → label-occlusion → train-prior → refine →
/// evaluate, plus augment and compose over the toy manifest. Returns the
/// output directory.
pub fn run_pipeline(root: &Path, seed: u64, fit_config: &str, count: usize) -> Result<PathBuf, String> {
    let out = root.join("out");
    std::fs::create_dir_all(&out).map_err(|e| e.to_string())?;
    let fit_cfg = root.join("fit.json");
    let prior_cfg = root.join("prior_cfg.json");
    std::fs::write(&fit_cfg, fit_config).map_err(|e| e.to_string())?;
    std::fs::write(&prior_cfg, SMALL_PRIOR).map_err(|e| e.to_string())?;
    let p = |name: &str| out.join(name).to_string_lossy().into_owned();
    let (fit_cfg, prior_cfg) = (
        fit_cfg.to_string_lossy().into_owned(),
        prior_cfg.to_string_lossy().into_owned(),
    );
    let seed = seed.to_string();
    let count = count.to_string();
    let s = |args: &[&str]| {
        let mut v = vec!["--seed", seed.as_str()];
        v.extend_from_slice(args);
        handsynth(&out, &v)
    };
    let (model, manifest) = (p("model.json"), p("manifest.jsonl"));
    s(&["build-asset", "--carpal"])?;
    s(&[
        "toy-data",
        "--model",
        &model,
        "--count",
        &count,
        "--prior-poses",
        "256",
        "--image-size",
        "64",
    ])?;
    s(&["fit", "--model", &model, "--manifest", &manifest, "--config", &fit_cfg])?;
    s(&["label-occlusion", "--model", &model, "--manifest", &manifest])?;
    s(&[
        "train-prior",
        "--poses",
        &p("prior_poses.jsonl"),
        "--config",
        &prior_cfg,
    ])?;
    s(&[
        "refine",
        "--prior",
        &p("prior.json"),
        "--predictions",
        &p("predictions.jsonl"),
        "--labels",
        &p("labels.jsonl"),
        "--model",
        &model,
    ])?;
    s(&[
        "evaluate",
        "--predictions",
        &p("refined.jsonl"),
        "--ground-truth",
        &p("ground_truth.jsonl"),
        "--labels",
        &p("labels.jsonl"),
    ])?;
    s(&["augment", "--manifest", &manifest])?;
    s(&["compose", "--manifest", &manifest])?;
    Ok(out)
}

/// Every file under `dir`, relative path and contents, sorted.
pub fn tree(dir: &Path) -> std::io::Result<Vec<(PathBuf, Vec<u8>)>> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d)? {
            let path = e?.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).expect("walked from dir").to_path_buf();
                out.push((rel, std::fs::read(&path)?));
            }
        }
    }
    out.sort();
    Ok(out)
}
