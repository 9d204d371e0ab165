use std::path::PathBuf;

use lorenc_core::container::{split_artifacts, ProtectedModel};
use lorenc_core::metrics::removed_energy_ratio;
use lorenc_core::pipeline::protect_layer;
use lorenc_core::{Seed, DEFAULT_DELTA_R};

use super::{load_baseline, save};
use crate::error::{CliError, CliResult, Status};
use crate::report::{LayerReport, ReportBuilder};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Baseline container from `gen`.
    #[arg(long = "in")]
    input: PathBuf,
    /// Number of leading singular components withheld from each weight.
    #[arg(long, default_value_t = DEFAULT_DELTA_R as u64, value_parser = clap::value_parser!(u64).range(1..))]
    delta_r: u64,
    #[arg(long, env = "LORENC_SEED", default_value_t = 0)]
    seed: u64,
    /// Output container for the edge device (truncated weights, rotated adapters).
    #[arg(long)]
    out_deploy: PathBuf,
    /// Output keystore (restoration keys only).
    #[arg(long)]
    out_keys: PathBuf,
    /// Report path (stdout when absent).
    #[arg(long)]
    report: Option<PathBuf>,
}

pub fn run(args: Args, argv: Vec<String>) -> CliResult<Status> {
    let delta_r = args.delta_r as usize;
    let seed = Seed(args.seed);
    let mut report = ReportBuilder::new(argv, args.seed);
    let base = load_baseline(&args.input)?;

    let mut layers = Vec::with_capacity(base.len());
    for l in &base {
        let protected = protect_layer(&l.name, &l.w, &l.adapters, delta_r, seed)
            .map_err(|e| CliError::usage(format!("layer {}: {e}", l.name)))?;
        let ratio =
            removed_energy_ratio(&l.w, delta_r).map_err(|e| CliError::usage(format!("layer {}: {e}", l.name)))?;
        eprintln!("{}: removed energy ratio {ratio:.6}", l.name);
        report.report.layers.push(LayerReport {
            shape: Some(l.w.shape()),
            adapters: Some(l.adapters.len()),
            removed_energy_ratio: Some(ratio),
            ..LayerReport::named(&l.name)
        });
        layers.push((l.name.clone(), protected));
    }
    let (deploy, keys) = split_artifacts(&ProtectedModel::new(seed, delta_r, layers));
    save(&args.out_deploy, &deploy)?;
    save(&args.out_keys, &keys)?;
    report.finish(args.report.as_deref())
}
