use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use handsynth_core::compose::{run_batch, CompositionJob, CompositionMode};
use handsynth_core::seed::derive_seed;
use handsynth_core::spectrum::{amp_augment, band_variance, AmpAugParams};
use rayon::prelude::*;
use serde_json::json;

use super::output;
use crate::args::{AnalyzeSpectrumArgs, AugmentArgs, ComposeArgs, ImageSource, ModeArg};
use crate::io::{read_image, read_json, read_mask, write_image, write_json};
use crate::manifest::{load_manifest, Field};
use crate::summary::{Failure, Run};

type ImageList = (Vec<(String, PathBuf)>, Vec<PathBuf>);

/// `(id, path)` pairs from a manifest's `image` fields or from the PNG files
/// of a directory, sorted by name.
fn image_list(source: &ImageSource) -> anyhow::Result<ImageList> {
    if let Some(m) = &source.manifest {
        let manifest = load_manifest(m, &[Field::Image])?;
        let list = manifest
            .records
            .iter()
            .map(|r| (r.id.clone(), manifest.resolve(r.image.as_deref().expect("required"))))
            .collect();
        return Ok((list, vec![m.clone()]));
    }
    let dir = source.input_dir.as_ref().expect("clap enforces one source");
    let mut list = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        let is_png = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if is_png && path.is_file() {
            let id = path
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| anyhow!("file name {} is not UTF-8", path.display()))?
                .to_string();
            list.push((id, path));
        }
    }
    list.sort();
    if list.is_empty() {
        bail!("no PNG images in {}", dir.display());
    }
    Ok((list, Vec::new()))
}

pub fn augment(args: &AugmentArgs, out: &Path, seed: u64) -> anyhow::Result<Run> {
    let mut params: AmpAugParams = match &args.params {
        Some(p) => read_json(p)?,
        None => AmpAugParams::default(),
    };
    if let Some(a) = args.alpha {
        params.alpha = a;
    }
    if let Some(k) = args.k {
        params.k = k;
    }
    if let Some(b) = args.beta {
        params.beta = b;
    }
    if args.no_clamp {
        params.clamp_nonneg = false;
    }
    params.validate()?;
    let (list, mut inputs) = image_list(&args.source)?;
    inputs.extend(args.params.iter().cloned());
    inputs.extend(list.iter().map(|(_, p)| p.clone()));

    let results: Vec<anyhow::Result<_>> = list
        .par_iter()
        .map(|(id, path)| {
            let img = read_image(path)?;
            let p = AmpAugParams {
                seed: derive_seed(seed, id),
                ..params
            };
            Ok(amp_augment(&img, &p)?)
        })
        .collect();

    // The per-image seed is derived, so the one in the params is not used.
    let mut run = Run {
        config: json!({ "alpha": params.alpha, "k": params.k, "beta": params.beta, "clampNonneg": params.clamp_nonneg }),
        inputs,
        ..Default::default()
    };
    for ((id, _), result) in list.iter().zip(results) {
        match result {
            Ok(img) => write_image(&output(&mut run.outputs, out, format!("augmented/{id}.png")), &img)?,
            Err(e) => run.failures.push(Failure {
                id: id.clone(),
                error: format!("{e:#}"),
            }),
        }
    }
    Ok(run)
}

pub fn analyze_spectrum(args: &AnalyzeSpectrumArgs, out: &Path) -> anyhow::Result<Run> {
    let (list, mut inputs) = image_list(&args.source)?;
    inputs.extend(list.iter().map(|(_, p)| p.clone()));
    let images = list
        .par_iter()
        .map(|(_, p)| read_image(p))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let profile = band_variance(&images, args.bands)?;
    let mut run = Run {
        config: json!({ "bands": args.bands }),
        inputs,
        ..Default::default()
    };
    if profile.single_image {
        run.warnings
            .push("only one image was profiled, every variance is 0".into());
    }
    if !profile.empty_bands.is_empty() {
        run.warnings.push(format!(
            "bands {:?} contain no frequency bin at this resolution",
            profile.empty_bands
        ));
    }
    let csv = output(&mut run.outputs, out, "spectrum.csv");
    std::fs::write(&csv, profile.to_csv()).with_context(|| format!("writing {}", csv.display()))?;
    write_json(&output(&mut run.outputs, out, "spectrum.json"), &profile)?;
    Ok(run)
}

/// Validates every record, reads every input and composes every image before
/// the first write, so a bad manifest leaves the output directory untouched.
pub fn compose(args: &ComposeArgs, out: &Path, seed: u64) -> anyhow::Result<Run> {
    let required = [Field::Syn, Field::Real, Field::ObjectMask, Field::ArmMask];
    let default_mode = match args.mode {
        ModeArg::Segmented => CompositionMode::Segmented,
        ModeArg::RandomFill => CompositionMode::RandomFill,
    };
    let manifest = load_manifest(&args.manifest, &required)?;
    let needs_hand: Vec<&str> = manifest
        .records
        .iter()
        .filter(|r| r.mode.unwrap_or(default_mode) == CompositionMode::RandomFill && r.masks.hand.is_none())
        .map(|r| r.id.as_str())
        .collect();
    if !needs_hand.is_empty() {
        bail!("random fill needs a hand mask, missing for records {needs_hand:?}");
    }

    let mut inputs = vec![args.manifest.clone()];
    let jobs = manifest
        .records
        .iter()
        .map(|r| {
            let syn = manifest.resolve(r.syn.as_deref().expect("required"));
            let real = manifest.resolve(r.real.as_deref().expect("required"));
            let obj = manifest.resolve(r.masks.object.as_deref().expect("required"));
            let arm = manifest.resolve(r.masks.arm.as_deref().expect("required"));
            let hand = r.masks.hand.as_deref().map(|h| manifest.resolve(h));
            inputs.extend([syn.clone(), real.clone(), obj.clone(), arm.clone()]);
            inputs.extend(hand.clone());
            (r, syn, real, obj, arm, hand)
        })
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(r, syn, real, obj, arm, hand)| {
            let job = CompositionJob {
                syn: read_image(&syn)?,
                real: read_image(&real)?,
                object_mask: read_mask(&obj)?,
                arm_mask: read_mask(&arm)?,
                hand_mask: hand.as_deref().map(read_mask).transpose()?,
                mode: r.mode.unwrap_or(default_mode),
                seed: r.seed.unwrap_or_else(|| derive_seed(seed, &r.id)),
            };
            Ok(job)
        })
        .collect::<anyhow::Result<Vec<_>>>()
        .context("reading composition inputs")?;

    let mut composed = Vec::with_capacity(jobs.len());
    for (r, result) in manifest.records.iter().zip(run_batch(&jobs)) {
        composed.push(result.with_context(|| format!("record {:?}", r.id))?);
    }

    let mut run = Run {
        config: json!({ "mode": default_mode }),
        inputs,
        ..Default::default()
    };
    for (r, img) in manifest.records.iter().zip(&composed) {
        write_image(&output(&mut run.outputs, out, format!("composed/{}.png", r.id)), img)?;
    }
    Ok(run)
}
