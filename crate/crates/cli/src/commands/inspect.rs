use std::path::PathBuf;

use serde::Serialize;

use lorenc_core::container::{ModelMeta, TensorRecord, TensorRole};
use lorenc_core::metrics::gram_offdiag_mass;

use super::load;
use crate::error::{CliResult, Status};
use crate::report::emit_json;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Container to inspect.
    #[arg(long = "in")]
    input: PathBuf,
    /// Report path (stdout when absent).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct GramEntry {
    tensor: String,
    gram_offdiag_mass: f64,
}

#[derive(Debug, Serialize)]
struct InspectReport {
    path: String,
    format_version: u32,
    model_meta: ModelMeta,
    tensor_count: usize,
    payload_bytes: u64,
    tensors: Vec<TensorRecord>,
    /// Column-space factors (B-like tensors) and their Gram off-diagonal mass;
    /// zero means mutually orthogonal columns, the signature of raw SVD output.
    gram: Vec<GramEntry>,
}

pub fn run(args: Args) -> CliResult<Status> {
    let c = load(&args.input)?;
    let gram = c
        .manifest
        .tensors
        .iter()
        .zip(&c.tensors)
        .filter(|(rec, _)| matches!(rec.role, TensorRole::AdapterB | TensorRole::LoraB | TensorRole::KeyKb))
        .map(|(rec, m)| GramEntry {
            tensor: rec.name.clone(),
            gram_offdiag_mass: gram_offdiag_mass(m),
        })
        .collect();
    let report = InspectReport {
        path: args.input.display().to_string(),
        format_version: c.manifest.format_version,
        model_meta: c.meta().clone(),
        tensor_count: c.manifest.tensors.len(),
        payload_bytes: c.manifest.tensors.iter().map(|t| t.byte_length).sum(),
        tensors: c.manifest.tensors.clone(),
        gram,
    };
    emit_json(&report, args.report.as_deref())?;
    Ok(Status::Pass)
}
