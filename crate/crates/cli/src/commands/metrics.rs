use std::path::PathBuf;

use lorenc_core::container::deployed_layers;
use lorenc_core::metrics::{
    gram_offdiag_mass, layer_log_mse, overhead_report, removed_energy_ratio, w_error, LayerSet,
};
use lorenc_core::Seed;

use super::verify::{layer_integrity, load_protected};
use super::{load, load_baseline};
use crate::error::{CliError, CliResult, Status};
use crate::report::{LayerReport, ReportBuilder, WError};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Deploy container from `protect`.
    #[arg(long)]
    deploy: PathBuf,
    /// Keystore; when given, restoration errors are reported too.
    #[arg(long)]
    keys: Option<PathBuf>,
    /// Baseline container from `gen`.
    #[arg(long)]
    baseline: PathBuf,
    /// Seed for the random probe vectors of the forward check.
    #[arg(long, env = "LORENC_SEED", default_value_t = 0)]
    seed: u64,
    /// Report path (stdout when absent).
    #[arg(long)]
    report: Option<PathBuf>,
}

/// Reports, per layer: energy withheld by truncation, W-Error of the deployed
/// weight against the original, Gram off-diagonal mass of each deployed
/// adapter, and (with keys) restoration errors; plus the model overhead.
pub fn run(args: Args, argv: Vec<String>) -> CliResult<Status> {
    let mut report = ReportBuilder::new(argv, args.seed);
    let base = load_baseline(&args.baseline)?;
    let deploy = load(&args.deploy)?;
    let deployed =
        deployed_layers(&deploy).map_err(|e| CliError::from_container(&args.deploy.display().to_string(), e))?;
    let protected = match &args.keys {
        Some(keys) => Some(load_protected(&args.deploy, Some(keys.as_path()))?),
        None => None,
    };
    let delta_r = deploy.meta().delta_r as usize;
    let base_rank = deploy.meta().base_rank as usize;

    let mut dims = Vec::with_capacity(deployed.len());
    let mut truncation_pairs = Vec::with_capacity(deployed.len());
    for dl in &deployed {
        let b = base
            .iter()
            .find(|b| b.name == dl.name)
            .ok_or_else(|| CliError::missing(format!("layer {} absent from baseline", dl.name)))?;
        if b.w.shape() != dl.w_trunc.shape() {
            return Err(CliError::corrupt(format!(
                "layer {}: baseline and deploy shapes differ",
                dl.name
            )));
        }
        let layer_delta_r = protected
            .as_ref()
            .and_then(|p| p.layer(&dl.name))
            .map_or(delta_r, |l| l.delta_r());
        let ratio = removed_energy_ratio(&b.w, layer_delta_r).map_err(|e| CliError::usage(e.to_string()))?;
        let trunc_err = layer_log_mse(&b.w, &dl.w_trunc).map_err(|e| CliError::usage(e.to_string()))?;
        let masses = dl.adapters.iter().map(|a| gram_offdiag_mass(&a.b)).collect();
        let mut lr = LayerReport {
            shape: Some(dl.w_trunc.shape()),
            adapters: Some(dl.adapters.len()),
            removed_energy_ratio: Some(ratio),
            w_error: Some(WError(trunc_err)),
            gram_offdiag_mass: Some(masses),
            ..LayerReport::named(&dl.name)
        };
        if let Some(layer) = protected.as_ref().and_then(|p| p.layer(&dl.name)) {
            let (restore, forward) = layer_integrity(b, layer, Seed(args.seed))
                .map_err(|e| CliError::corrupt(format!("layer {}: {e}", dl.name)))?;
            lr.max_restore_rel_error = Some(restore);
            lr.max_forward_rel_error = Some(forward);
        }
        report.report.layers.push(lr);
        dims.push(dl.w_trunc.shape());
        truncation_pairs.push((dl.name.clone(), b.w.clone(), dl.w_trunc.clone()));
    }
    if !truncation_pairs.is_empty() {
        let set = LayerSet::new(truncation_pairs).map_err(|e| CliError::usage(e.to_string()))?;
        report.report.w_error = Some(WError(w_error(&set)));
    }
    report.report.overhead = Some(overhead_report(&dims, base_rank, delta_r));
    report.finish(args.report.as_deref())
}
