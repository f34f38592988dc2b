// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Delay formulas are undefined at or above full utilization.
    #[error("unstable link: utilization {utilization:.6} >= 1")]
    UnstableLink { utilization: f64 },

    #[error("lambda_s exceeds LLR limit {limit}")]
    OutOfRegion { lambda_s: f64, limit: f64 },

    #[error("lambda_b {lambda_b} exceeds the max allocation {lambda_b_plus}")]
    AboveMaxAllocation { lambda_b: f64, lambda_b_plus: f64 },

    #[error("degenerate curve: no strictly positive value to normalize by")]
    DegenerateCurve,

    #[error("trace parse error at line {line}: {msg}")]
    TraceParse { line: usize, msg: String },

    #[error("trace contains no packets")]
    EmptyTrace,

    #[error("infeasible traffic parameters: {0}")]
    Infeasible(String),

    #[error("simulation delivered no packets for the {0} flow")]
    EmptyResult(&'static str),

    /// The queue grew past the configured abort threshold.
    #[error("unstable: {queued} packets queued at t={time:.3}s (abort threshold {threshold})")]
    Unstable {
        queued: usize,
        time: f64,
        threshold: usize,
    },

    #[error("DS flow is outside the low-latency region at lambda_b=0 (delay {delay:.6}s > inter-arrival {inter_arrival:.6}s)")]
    DsOutsideLlr { delay: f64, inter_arrival: f64 },

    #[error("sweep grid ends at {stop} before the LLR condition is violated")]
    GridTooShort { stop: f64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
