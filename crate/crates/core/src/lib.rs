// SPDX-License-Identifier: Apache-2.0

//! Low-latency region (LLR) analysis of a best-effort FIFO link carrying a
//! delay-sensitive (DS) stream and non-delay-sensitive (NDS) background
//! traffic.
//!
//! - [`analytics`]: M/G/1 closed forms for the LLR, max and
//!   proportional-fair (PFLL) NDS allocations.
//! - [`curve`]: sampled trade-off curves and their maxima.
//! - [`traffic`]: trace files, trace statistics and packet generators.
//! - [`sim`]: event-driven simulator of the shared link.
//! - [`alloc`]: empirical allocation search over simulation sweeps.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod alloc;
pub mod analytics;
pub mod curve;
pub mod error;
pub mod sim;
pub mod traffic;
pub mod units;

pub use alloc::{
    compare_strategies, empirical_max_alloc, empirical_pfll, percentile_impact, AllocationReport,
    PercentileRow, StrategyComparison, SweepConfig, SweepPoint,
};
pub use analytics::{LinkLoad, ServiceModel};
pub use curve::{normalize_curve, GainCurve};
pub use error::{Error, Result};
pub use sim::{delay_cdf, delay_percentile, run, Flow, FlowSpec, Horizon, SimConfig, SimResult};
pub use traffic::{
    load_trace, synth_stadia_like, trace_stats, write_trace, ArrivalModel, BatchSize, SizeModel,
    StadiaProfile, TraceRecord, TraceStats, STADIA_PROFILES,
};
pub use units::PacketUnits;
