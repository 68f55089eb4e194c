mod images;
mod labels;
mod model;
mod poses;

use std::path::{Path, PathBuf};

pub use images::{analyze_spectrum, augment, compose};
pub use labels::label_occlusion;
pub use model::{build_asset, fit, toy_data};
pub use poses::{evaluate, refine, train_prior};

use crate::args::ValidateManifestArgs;
use crate::manifest::validate_manifest;

/// Prints the validation report; exit code 1 when there are violations.
pub fn validate(args: &ValidateManifestArgs) -> anyhow::Result<i32> {
    let (_, report) = validate_manifest(&args.manifest, &[])?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    Ok(if report.is_valid() { 0 } else { 1 })
}

/// Output path `out/relative`, remembered for the run summary.
fn output(outputs: &mut Vec<PathBuf>, out: &Path, relative: impl AsRef<Path>) -> PathBuf {
    let p = out.join(relative);
    outputs.push(p.clone());
    p
}
