//! Pipelines behind the `handsynth` binary.

pub mod args;
mod commands;
pub mod io;
pub mod manifest;
pub mod summary;

use anyhow::Context;

use args::{Cli, Command};
use summary::{RunSummary, Status};

/// Exit status when some records failed but the rest were written.
pub const EXIT_PARTIAL: i32 = 3;

/// Runs one subcommand and writes its summary. Returns the process exit code.
pub fn run(cli: Cli) -> anyhow::Result<i32> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    if let Command::ValidateManifest(a) = &cli.command {
        return commands::validate(a);
    }
    std::fs::create_dir_all(&cli.out_dir).with_context(|| format!("creating {}", cli.out_dir.display()))?;
    let out = cli.out_dir.as_path();
    let seed = cli.seed;
    let run = match &cli.command {
        Command::BuildAsset(a) => commands::build_asset(a, out)?,
        Command::ToyData(a) => commands::toy_data(a, out, seed)?,
        Command::Fit(a) => commands::fit(a, out)?,
        Command::Augment(a) => commands::augment(a, out, seed)?,
        Command::AnalyzeSpectrum(a) => commands::analyze_spectrum(a, out)?,
        Command::Compose(a) => commands::compose(a, out, seed)?,
        Command::LabelOcclusion(a) => commands::label_occlusion(a, out)?,
        Command::TrainPrior(a) => commands::train_prior(a, out, seed)?,
        Command::Refine(a) => commands::refine(a, out)?,
        Command::Evaluate(a) => commands::evaluate(a, out)?,
        Command::ValidateManifest(_) => unreachable!("handled above"),
    };
    let name = cli.command.name();
    let summary = RunSummary::build(name, seed, run)?;
    for f in &summary.failures {
        eprintln!("{name}: record {} failed: {}", f.id, f.error);
    }
    io::write_json(&out.join(format!("{name}.summary.json")), &summary)?;
    Ok(match summary.status {
        Status::Complete => 0,
        Status::Partial => EXIT_PARTIAL,
    })
}
