//! Spectral DeTuning: recover a shared base weight from several merged
//! copies by alternating low-rank residual fits with averaging.
//!
//! Update rule, with `Ŵ₀ = mean_k W'_k` and a rank `r_t` interpolated
//! linearly from `sched_start_rank` to `sched_end_rank`:
//!
//! ```text
//! E_k   = TSVD_{r_t}(W'_k − Ŵ)
//! Ŵ     = mean_k (W'_k − E_k)
//! ```

use std::io::{self, Write};

use crate::attacks::MergedObservationSet;
use crate::error::{Error, Result};
use crate::linalg::{low_rank_approx, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SdtConfig {
    pub n_iters: usize,
    pub sched_start_rank: usize,
    pub sched_end_rank: usize,
}

impl Default for SdtConfig {
    fn default() -> Self {
        Self {
            n_iters: 300,
            sched_start_rank: 1,
            sched_end_rank: 32,
        }
    }
}

impl SdtConfig {
    pub fn validate(&self, shape: (usize, usize)) -> Result<()> {
        let max = shape.0.min(shape.1);
        if self.n_iters == 0 {
            return Err(Error::InvalidArgument("n_iters must be positive".into()));
        }
        if self.sched_start_rank == 0 || self.sched_start_rank > self.sched_end_rank || self.sched_end_rank > max {
            return Err(Error::InvalidArgument(format!(
                "rank schedule {}..{} invalid for min dimension {max}",
                self.sched_start_rank, self.sched_end_rank
            )));
        }
        Ok(())
    }
}

/// `round(start + (end − start) · t / (n_iters − 1))`.
pub fn scheduled_rank(cfg: &SdtConfig, t: usize) -> usize {
    if cfg.n_iters <= 1 {
        return cfg.sched_start_rank;
    }
    let span = (cfg.sched_end_rank - cfg.sched_start_rank) as f64;
    let frac = t.min(cfg.n_iters - 1) as f64 / (cfg.n_iters - 1) as f64;
    (cfg.sched_start_rank as f64 + span * frac).round() as usize
}

/// One row of the per-iteration attack trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub iteration: usize,
    pub rank: usize,
    pub w_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackResult {
    pub w_hat: Matrix,
    /// Empty unless an evaluator was supplied.
    pub trace: Vec<TraceRecord>,
}

impl AttackResult {
    pub fn final_w_error(&self) -> Option<f64> {
        self.trace.last().map(|r| r.w_error)
    }
}

fn mean(ms: &[Matrix]) -> Matrix {
    let mut acc = ms[0].clone();
    for m in &ms[1..] {
        acc = acc.add(m).expect("observation shapes checked");
    }
    if ms.len() == 1 {
        acc
    } else {
        acc.scale(1.0 / ms.len() as f64)
    }
}

/// Runs the attack. `evaluate` is called on `Ŵ` after every iteration and its
/// value recorded in the trace; it is the only place ground truth enters.
pub fn spectral_detuning(
    obs: &MergedObservationSet,
    cfg: &SdtConfig,
    evaluate: Option<&dyn Fn(&Matrix) -> f64>,
) -> Result<AttackResult> {
    cfg.validate(obs.shape())?;
    let merged = obs.merged();
    let mut w_hat = mean(merged);
    let mut trace = Vec::with_capacity(if evaluate.is_some() { cfg.n_iters } else { 0 });

    for t in 0..cfg.n_iters {
        let rank = scheduled_rank(cfg, t);
        let cleaned = merged
            .iter()
            .map(|wk| {
                let residual = wk.sub(&w_hat)?;
                wk.sub(&low_rank_approx(&residual, rank)?)
            })
            .collect::<Result<Vec<_>>>()?;
        w_hat = mean(&cleaned);
        if let Some(f) = evaluate {
            trace.push(TraceRecord {
                iteration: t,
                rank,
                w_error: f(&w_hat),
            });
        }
    }
    Ok(AttackResult { w_hat, trace })
}

/// Writes the trace as CSV lines `iteration,rank,w_error`, header first.
/// Exact recovery renders as `-inf`.
pub fn write_trace<W: Write>(out: &mut W, trace: &[TraceRecord]) -> io::Result<()> {
    writeln!(out, "iteration,rank,w_error")?;
    for rec in trace {
        writeln!(
            out,
            "{},{},{}",
            rec.iteration,
            rec.rank,
            crate::metrics::format_w_error(rec.w_error)
        )?;
    }
    Ok(())
}
