use std::path::PathBuf;

use lorenc_core::container::baseline_container;
use lorenc_core::synth::{generate_model, ModelSpec, Spike};
use lorenc_core::{Seed, DEFAULT_DELTA_R};

use super::{parse_pair, save};
use crate::error::{CliError, CliResult, Status};
use crate::report::{LayerReport, ReportBuilder};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Number of layers.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    layers: u64,
    /// Weight shape as `m,n`.
    #[arg(long, value_parser = parse_pair)]
    dims: (usize, usize),
    /// LoRA rank r of every adapter.
    #[arg(long)]
    rank: usize,
    /// Number of task adapters per layer.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    adapters: u64,
    #[arg(long, env = "LORENC_SEED", default_value_t = 0)]
    seed: u64,
    /// Output baseline container.
    #[arg(long)]
    out: PathBuf,
    /// Rank of the planted spectral spike.
    #[arg(long, default_value_t = 4)]
    spike_rank: usize,
    /// Spike singular value relative to the Gaussian bulk edge √m + √n.
    #[arg(long, default_value_t = 10.0)]
    spike_ratio: f64,
    /// Plain Gaussian weights without a planted spike.
    #[arg(long, conflicts_with_all = ["spike_rank", "spike_ratio"])]
    no_spike: bool,
    /// Standard deviation of adapter factor entries.
    #[arg(long, default_value_t = 1.0)]
    adapter_std: f64,
    /// Report path (stdout when absent).
    #[arg(long)]
    report: Option<PathBuf>,
}

pub fn run(args: Args, argv: Vec<String>) -> CliResult<Status> {
    let (m, n) = args.dims;
    let min = m.min(n);
    if args.rank == 0 || args.rank > min {
        return Err(CliError::usage(format!(
            "--rank {} must be in 1..={min} for dims {m},{n}",
            args.rank
        )));
    }
    if args.rank + DEFAULT_DELTA_R > min {
        eprintln!(
            "warning: rank {} + default delta-r {DEFAULT_DELTA_R} exceeds min({m}, {n}); \
             protect will need a smaller --delta-r",
            args.rank
        );
    }
    if !(args.adapter_std.is_finite() && args.adapter_std > 0.0) {
        return Err(CliError::usage("--adapter-std must be positive"));
    }
    let spike = if args.no_spike {
        None
    } else {
        if args.spike_rank > min {
            return Err(CliError::usage(format!(
                "--spike-rank {} exceeds min({m}, {n}); lower it or pass --no-spike",
                args.spike_rank
            )));
        }
        if !(args.spike_ratio.is_finite() && args.spike_ratio >= 0.0) {
            return Err(CliError::usage("--spike-ratio must be non-negative"));
        }
        Some(Spike {
            rank: args.spike_rank,
            ratio: args.spike_ratio,
        })
    };
    let spec = ModelSpec {
        layers: args.layers as usize,
        m,
        n,
        rank: args.rank,
        adapters: args.adapters as usize,
        spike,
        adapter_std: args.adapter_std,
    };
    let mut report = ReportBuilder::new(argv, args.seed);
    let layers = generate_model(&spec, Seed(args.seed)).map_err(|e| CliError::usage(e.to_string()))?;
    save(&args.out, &baseline_container(&layers, Seed(args.seed)))?;
    for l in &layers {
        report.report.layers.push(LayerReport {
            shape: Some(l.w.shape()),
            adapters: Some(l.adapters.len()),
            ..LayerReport::named(&l.name)
        });
    }
    eprintln!("wrote {} layer(s) to {}", layers.len(), args.out.display());
    report.finish(args.report.as_deref())
}
