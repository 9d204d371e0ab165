use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use lorenc_core::attacks::{
    build_observations, finetune_recovery, least_squares_recovery, make_samples, protect_with_random_key,
    spectral_detuning, suggested_learning_rate, write_trace, FinetuneConfig, MergedObservationSet, Scenario, SdtConfig,
    TraceRecord,
};
use lorenc_core::container::{deployed_layers, DeployedLayer};
use lorenc_core::metrics::{format_w_error, layer_log_mse, w_error, LayerSet};
use lorenc_core::pipeline::extract_spectral_key;
use lorenc_core::synth::SyntheticLayer;
use lorenc_core::{Matrix, Seed, DEFAULT_DELTA_R};

use super::{load, load_baseline, parse_pair};
use crate::error::{CliError, CliResult, Status};
use crate::report::{AttackSummary, LayerReport, ReportBuilder, WError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Method {
    /// Spectral DeTuning over the merged observations.
    Sdt,
    /// Linear fine-tuning from the truncated weight on (x, W·x) pairs.
    Ft,
}

impl Method {
    fn as_str(self) -> &'static str {
        match self {
            Method::Sdt => "sdt",
            Method::Ft => "ft",
        }
    }
}

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Baseline container: ground truth for W-Error, and the source of
    /// observations when no deploy container is given.
    #[arg(long, required_unless_present = "deploy")]
    baseline: Option<PathBuf>,
    /// Deploy container: attack the deployed (LoREnc) artifacts directly.
    #[arg(long)]
    deploy: Option<PathBuf>,
    #[arg(long, value_enum)]
    method: Method,
    /// unprotected | lorenc | random_key | self_derived_key
    #[arg(long, default_value = "lorenc")]
    scenario: String,
    /// Number of task adapters observed (default: all).
    #[arg(long)]
    tasks: Option<usize>,
    /// SDT iterations.
    #[arg(long, default_value_t = 300)]
    n_iters: usize,
    /// SDT rank schedule `start,end`.
    #[arg(long, value_parser = parse_pair, default_value = "1,32")]
    ranks: (usize, usize),
    /// Δr used when protecting on the fly from the baseline.
    #[arg(long, default_value_t = DEFAULT_DELTA_R)]
    delta_r: usize,
    /// Fine-tuning: number of (x, W·x) samples per layer.
    #[arg(long, default_value_t = 0)]
    samples: usize,
    /// Fine-tuning: gradient steps.
    #[arg(long, default_value_t = 500)]
    steps: usize,
    /// Fine-tuning: step size (default: a stable value from the sample covariance).
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Fine-tuning: ridge weight pulling towards the truncated weight.
    #[arg(long, default_value_t = 0.0)]
    ridge: f64,
    /// Fine-tuning: use the closed-form least-squares limit instead of gradient steps.
    #[arg(long)]
    exact: bool,
    #[arg(long, env = "LORENC_SEED", default_value_t = 0)]
    seed: u64,
    /// Report path (stdout when absent).
    #[arg(long)]
    report: Option<PathBuf>,
    /// SDT only: per-iteration CSV trace `iteration,rank,w_error` (needs --baseline).
    #[arg(long)]
    trace: Option<PathBuf>,
}

/// What the attacker holds for one layer, plus ground truth when known.
struct Target {
    name: String,
    truth: Option<Matrix>,
    observations: MergedObservationSet,
    w_trunc: Option<Matrix>,
}

fn usage<E: std::fmt::Display>(layer: &str) -> impl Fn(E) -> CliError + '_ {
    move |e| CliError::usage(format!("layer {layer}: {e}"))
}

fn take_tasks(available: usize, tasks: Option<usize>, layer: &str) -> CliResult<usize> {
    match tasks {
        None => Ok(available),
        Some(0) => Err(CliError::usage("--tasks must be positive")),
        Some(k) if k > available => Err(CliError::usage(format!(
            "layer {layer}: --tasks {k} exceeds the {available} available adapters"
        ))),
        Some(k) => Ok(k),
    }
}

fn targets_from_deploy(
    deployed: Vec<DeployedLayer>,
    base_rank: usize,
    base: Option<&[SyntheticLayer]>,
    tasks: Option<usize>,
) -> CliResult<Vec<Target>> {
    deployed
        .into_iter()
        .map(|dl| {
            let k = take_tasks(dl.adapters.len(), tasks, &dl.name)?;
            let merged = dl.adapters[..k]
                .iter()
                .map(|enc| dl.w_trunc.add(&enc.product()))
                .collect::<Result<Vec<_>, _>>()
                .map_err(usage(&dl.name))?;
            let truth = match base {
                Some(layers) => Some(
                    layers
                        .iter()
                        .find(|l| l.name == dl.name)
                        .ok_or_else(|| CliError::missing(format!("layer {} absent from baseline", dl.name)))?
                        .w
                        .clone(),
                ),
                None => None,
            };
            if let Some(t) = &truth {
                if t.shape() != dl.w_trunc.shape() {
                    return Err(CliError::usage(format!(
                        "layer {}: baseline and deploy shapes differ",
                        dl.name
                    )));
                }
            }
            Ok(Target {
                observations: MergedObservationSet::new(merged, base_rank.max(1)).map_err(usage(&dl.name))?,
                w_trunc: Some(dl.w_trunc),
                truth,
                name: dl.name,
            })
        })
        .collect()
}

fn targets_from_baseline(
    base: &[SyntheticLayer],
    scenario: Scenario,
    tasks: Option<usize>,
    delta_r: usize,
    seed: Seed,
) -> CliResult<Vec<Target>> {
    base.iter()
        .map(|l| {
            let k = take_tasks(l.adapters.len(), tasks, &l.name)?;
            let adapters = &l.adapters[..k];
            let observations =
                build_observations(&l.name, &l.w, adapters, scenario, delta_r, seed).map_err(usage(&l.name))?;
            let w_trunc = match scenario {
                Scenario::Lorenc => Some(extract_spectral_key(&l.w, delta_r).map_err(usage(&l.name))?.0),
                Scenario::RandomKey => Some(
                    protect_with_random_key(&l.name, &l.w, adapters, delta_r, seed)
                        .map_err(usage(&l.name))?
                        .w_trunc()
                        .clone(),
                ),
                Scenario::Unprotected | Scenario::SelfDerivedKey => None,
            };
            Ok(Target {
                name: l.name.clone(),
                truth: Some(l.w.clone()),
                observations,
                w_trunc,
            })
        })
        .collect()
}

/// Per-iteration W-Error across layers: the mean of per-layer traces.
fn merge_traces(traces: &[Vec<TraceRecord>]) -> Vec<TraceRecord> {
    let Some(first) = traces.first() else {
        return Vec::new();
    };
    first
        .iter()
        .enumerate()
        .map(|(t, rec)| TraceRecord {
            iteration: rec.iteration,
            rank: rec.rank,
            w_error: traces.iter().map(|tr| tr[t].w_error).sum::<f64>() / traces.len() as f64,
        })
        .collect()
}

pub fn run(args: Args, argv: Vec<String>) -> CliResult<Status> {
    let scenario: Scenario = args
        .scenario
        .parse()
        .map_err(|e: lorenc_core::Error| CliError::usage(e.to_string()))?;
    if args.deploy.is_some() && scenario != Scenario::Lorenc {
        return Err(CliError::usage(format!(
            "a deploy container holds LoREnc artifacts; --scenario {scenario} needs --baseline without --deploy"
        )));
    }
    if args.method == Method::Ft {
        if !matches!(scenario, Scenario::Lorenc | Scenario::RandomKey) {
            return Err(CliError::usage(format!(
                "--method ft starts from a truncated weight; scenario {scenario} deploys none (use lorenc or random_key)"
            )));
        }
        if args.baseline.is_none() {
            return Err(CliError::usage(
                "--method ft draws (x, W·x) samples and needs --baseline",
            ));
        }
        if args.trace.is_some() {
            return Err(CliError::usage("--trace is only produced by --method sdt"));
        }
    }
    if args.trace.is_some() && args.baseline.is_none() {
        return Err(CliError::usage("--trace reports W-Error and needs --baseline"));
    }
    if args.delta_r == 0 {
        return Err(CliError::usage("--delta-r must be positive"));
    }

    let seed = Seed(args.seed);
    let mut report = ReportBuilder::new(argv, args.seed);
    let base = args.baseline.as_deref().map(load_baseline).transpose()?;
    let targets = match &args.deploy {
        Some(path) => {
            let c = load(path)?;
            let deployed = deployed_layers(&c).map_err(|e| CliError::from_container(&path.display().to_string(), e))?;
            targets_from_deploy(deployed, c.meta().base_rank as usize, base.as_deref(), args.tasks)?
        }
        None => {
            let base = base.as_deref().expect("clap requires --baseline without --deploy");
            targets_from_baseline(base, scenario, args.tasks, args.delta_r, seed)?
        }
    };

    let tasks = targets.first().map_or(0, |t| t.observations.len());
    let sdt_cfg = SdtConfig {
        n_iters: args.n_iters,
        sched_start_rank: args.ranks.0,
        sched_end_rank: args.ranks.1,
    };
    let mut estimates = Vec::with_capacity(targets.len());
    let mut traces = Vec::new();
    for t in &targets {
        let w_hat = match args.method {
            Method::Sdt => {
                let eval = t
                    .truth
                    .as_ref()
                    .map(|truth| move |w: &Matrix| layer_log_mse(truth, w).expect("shapes checked"));
                let eval_ref = eval.as_ref().map(|f| f as &dyn Fn(&Matrix) -> f64);
                let result = spectral_detuning(&t.observations, &sdt_cfg, eval_ref).map_err(usage(&t.name))?;
                traces.push(result.trace);
                result.w_hat
            }
            Method::Ft => {
                let truth = t.truth.as_ref().expect("ft requires a baseline");
                let w_trunc = t.w_trunc.as_ref().expect("ft scenarios carry a truncated weight");
                let mut rng = seed.derive(&format!("{}#samples", t.name), 0).rng();
                let samples = make_samples(truth, args.samples, &mut rng);
                if args.exact {
                    least_squares_recovery(w_trunc, &samples, args.ridge).map_err(usage(&t.name))?
                } else {
                    let learning_rate = match args.learning_rate {
                        Some(lr) => lr,
                        None => suggested_learning_rate(&samples, args.ridge).map_err(usage(&t.name))?,
                    };
                    let cfg = FinetuneConfig {
                        steps: args.steps,
                        learning_rate,
                        ridge: args.ridge,
                    };
                    finetune_recovery(w_trunc, &samples, &cfg).map_err(usage(&t.name))?
                }
            }
        };
        let layer_err = match &t.truth {
            Some(truth) => Some(layer_log_mse(truth, &w_hat).map_err(usage(&t.name))?),
            None => None,
        };
        report.report.layers.push(LayerReport {
            shape: Some(w_hat.shape()),
            adapters: Some(t.observations.len()),
            w_error: layer_err.map(WError),
            ..LayerReport::named(&t.name)
        });
        estimates.push(w_hat);
    }

    let overall = if targets.iter().all(|t| t.truth.is_some()) && !targets.is_empty() {
        let set = targets
            .iter()
            .zip(&estimates)
            .map(|(t, est)| (t.name.clone(), t.truth.clone().expect("checked"), est.clone()))
            .collect();
        Some(w_error(
            &LayerSet::new(set).map_err(|e| CliError::usage(e.to_string()))?,
        ))
    } else {
        None
    };
    if let Some(v) = overall {
        eprintln!(
            "{} on {scenario} with {tasks} task(s): W-Error {}",
            args.method.as_str(),
            format_w_error(v)
        );
    }
    if let Some(path) = &args.trace {
        let file = File::create(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        write_trace(&mut BufWriter::new(file), &merge_traces(&traces))
            .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    }
    report.report.w_error = overall.map(WError);
    report.report.attack = Some(AttackSummary {
        method: args.method.as_str().into(),
        scenario: scenario.to_string(),
        tasks,
        n_iters: (args.method == Method::Sdt).then_some(args.n_iters),
        ranks: (args.method == Method::Sdt).then_some(args.ranks),
        samples: (args.method == Method::Ft).then_some(args.samples),
        w_error: overall.map(WError),
    });
    report.finish(args.report.as_deref())
}
