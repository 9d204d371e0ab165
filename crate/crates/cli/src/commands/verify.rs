use std::path::{Path, PathBuf};

use lorenc_core::container::{assemble_protected, ProtectedModel};
use lorenc_core::linalg::{gaussian_matrix, relative_fro_error};
use lorenc_core::synth::SyntheticLayer;
use lorenc_core::{ProtectedLayer, Seed};

use super::{load, load_baseline};
use crate::error::{CliError, CliResult, Status};
use crate::report::{LayerReport, ReportBuilder};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Deploy container from `protect`.
    #[arg(long)]
    deploy: PathBuf,
    /// Keystore from `protect`; required.
    #[arg(long)]
    keys: Option<PathBuf>,
    /// Baseline container from `gen`.
    #[arg(long)]
    baseline: PathBuf,
    /// Maximum relative Frobenius error of each restored merged weight.
    #[arg(long, default_value_t = 1e-10)]
    tolerance: f64,
    /// Maximum relative error of the authorized forward pass on random inputs.
    #[arg(long, default_value_t = 1e-9)]
    forward_tolerance: f64,
    /// Seed for the random probe vectors.
    #[arg(long, env = "LORENC_SEED", default_value_t = 0)]
    seed: u64,
    /// Report path (stdout when absent).
    #[arg(long)]
    report: Option<PathBuf>,
}

const PROBES_PER_ADAPTER: usize = 3;

/// Worst restore and forward relative errors of `layer` against `base`.
pub fn layer_integrity(base: &SyntheticLayer, layer: &ProtectedLayer, seed: Seed) -> Result<(f64, f64), String> {
    if layer.shape() != base.w.shape() {
        return Err(format!(
            "shape {:?} differs from baseline {:?}",
            layer.shape(),
            base.w.shape()
        ));
    }
    if layer.num_adapters() != base.adapters.len() {
        return Err(format!(
            "{} deployed adapters but {} in the baseline",
            layer.num_adapters(),
            base.adapters.len()
        ));
    }
    let mut rng = seed.derive(&format!("{}#probe", base.name), 0).rng();
    let mut restore = 0.0f64;
    let mut forward = 0.0f64;
    for k in 0..base.adapters.len() {
        let expected = base.merged(k).map_err(|e| e.to_string())?;
        let restored = layer.restore_merged(k).map_err(|e| e.to_string())?;
        restore = restore.max(relative_fro_error(&restored, &expected).map_err(|e| e.to_string())?);
        for _ in 0..PROBES_PER_ADAPTER {
            let x = gaussian_matrix(base.w.cols(), 1, 1.0, &mut rng).into_vec();
            let y = layer.forward_authorized(k, &x).map_err(|e| e.to_string())?;
            let y_ref = expected.matvec(&x).map_err(|e| e.to_string())?;
            let diff: f64 = y.iter().zip(&y_ref).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let norm: f64 = y_ref.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
            forward = forward.max(diff / norm);
        }
    }
    Ok((restore, forward))
}

pub fn load_protected(deploy: &Path, keys: Option<&Path>) -> CliResult<ProtectedModel> {
    let deploy_c = load(deploy)?;
    let keys_c = keys.map(load).transpose()?;
    assemble_protected(&deploy_c, keys_c.as_ref()).map_err(|e| {
        let origin = keys.unwrap_or(deploy).display().to_string();
        CliError::from_container(&origin, e)
    })
}

pub fn run(args: Args, argv: Vec<String>) -> CliResult<Status> {
    let Some(keys) = args.keys.as_ref() else {
        return Err(CliError::missing(
            "a keystore (--keys) is required to restore the merged weights",
        ));
    };
    if !(args.tolerance >= 0.0 && args.forward_tolerance >= 0.0) {
        return Err(CliError::usage("tolerances must be non-negative"));
    }
    let mut report = ReportBuilder::new(argv, args.seed);
    let base = load_baseline(&args.baseline)?;
    let model = load_protected(&args.deploy, Some(keys.as_path()))?;

    for b in &base {
        let Some(layer) = model.layer(&b.name) else {
            report.assert(
                format!("{}.present", b.name),
                false,
                "layer missing from deploy container",
            );
            eprintln!("FAIL {}: layer missing from deploy container", b.name);
            continue;
        };
        match layer_integrity(b, layer, Seed(args.seed)) {
            Ok((restore, forward)) => {
                let restore_ok = restore <= args.tolerance;
                let forward_ok = forward <= args.forward_tolerance;
                report.assert(
                    format!("{}.restore", b.name),
                    restore_ok,
                    format!("max relative error {restore:.3e} (tolerance {:.1e})", args.tolerance),
                );
                report.assert(
                    format!("{}.forward", b.name),
                    forward_ok,
                    format!(
                        "max relative error {forward:.3e} (tolerance {:.1e})",
                        args.forward_tolerance
                    ),
                );
                if !(restore_ok && forward_ok) {
                    eprintln!(
                        "FAIL {}: restore error {restore:.3e}, forward error {forward:.3e}",
                        b.name
                    );
                }
                report.report.layers.push(LayerReport {
                    shape: Some(layer.shape()),
                    adapters: Some(layer.num_adapters()),
                    max_restore_rel_error: Some(restore),
                    max_forward_rel_error: Some(forward),
                    ..LayerReport::named(&b.name)
                });
            }
            Err(why) => {
                eprintln!("FAIL {}: {why}", b.name);
                report.assert(format!("{}.restore", b.name), false, why);
            }
        }
    }
    for (name, _) in &model.layers {
        if !base.iter().any(|b| &b.name == name) {
            report.assert(format!("{name}.present"), false, "layer absent from baseline");
            eprintln!("FAIL {name}: layer absent from baseline");
        }
    }
    let status = report.finish(args.report.as_deref())?;
    if status == Status::Pass {
        eprintln!("verification passed for {} layer(s)", base.len());
    }
    Ok(status)
}
