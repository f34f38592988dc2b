// SPDX-License-Identifier: Apache-2.0

//! Packet traces, their summary statistics, and the arrival/size models that
//! feed the simulator.
//!
//! Trace files are UTF-8 CSV with the header `timestamp_s,size_bytes`, one
//! packet per row. Sizes are integer bytes on disk and bits in memory.

use std::io::{Read, Write};
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma, Geometric};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};

pub const TRACE_HEADER: [&str; 2] = ["timestamp_s", "size_bytes"];

/// Default gap below which consecutive packets belong to the same batch.
pub const DEFAULT_BATCH_GAP: f64 = 100e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    /// Seconds since trace start.
    pub timestamp: f64,
    pub size_bits: f64,
}

impl TraceRecord {
    pub fn new(timestamp: f64, size_bytes: u64) -> Self {
        Self {
            timestamp,
            size_bits: size_bytes as f64 * 8.0,
        }
    }
}

/// Parses a trace, sorting records by timestamp if needed.
pub fn load_trace<R: Read>(source: R) -> Result<Vec<TraceRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let header = reader.headers().map_err(|e| Error::TraceParse {
        line: 1,
        msg: e.to_string(),
    })?;
    if header.iter().collect::<Vec<_>>() != TRACE_HEADER {
        return Err(Error::TraceParse {
            line: 1,
            msg: format!("expected header `{}`", TRACE_HEADER.join(",")),
        });
    }

    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::TraceParse {
            line: e.position().map_or(0, |p| p.line() as usize),
            msg: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let bad = |msg: String| Error::TraceParse { line, msg };
        if row.len() != 2 {
            return Err(bad(format!("expected 2 fields, found {}", row.len())));
        }
        let timestamp: f64 = row[0]
            .parse()
            .map_err(|_| bad(format!("invalid timestamp `{}`", &row[0])))?;
        if !timestamp.is_finite() {
            return Err(bad(format!("invalid timestamp `{}`", &row[0])));
        }
        let size: u64 = row[1]
            .parse()
            .map_err(|_| bad(format!("invalid size `{}`", &row[1])))?;
        if size == 0 {
            return Err(bad("packet size must be positive".into()));
        }
        records.push(TraceRecord::new(timestamp, size));
    }

    if records.is_empty() {
        return Err(Error::EmptyTrace);
    }
    if records.windows(2).any(|w| w[1].timestamp < w[0].timestamp) {
        log::warn!("trace timestamps out of order; sorting {} records", records.len());
        records.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
    }
    Ok(records)
}

/// Writes records in the trace file format.
pub fn write_trace<W: Write>(records: &[TraceRecord], mut out: W) -> Result<()> {
    writeln!(out, "{}", TRACE_HEADER.join(","))?;
    for r in records {
        writeln!(out, "{:.9},{}", r.timestamp, (r.size_bits / 8.0).round() as u64)?;
    }
    out.flush()?;
    Ok(())
}

/// Trace summary in the layout of the Stadia characterization table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStats {
    /// Bits/second over the trace span.
    pub load: f64,
    /// Mean gap between consecutive batch starts, seconds.
    pub mean_iat: f64,
    pub cv_iat: f64,
    pub mean_size_bytes: f64,
    /// CV of service times `size / link_rate`.
    pub cv_service: f64,
    pub mean_batch_size: f64,
    /// Link rate the service statistics refer to, bits/second.
    pub link_rate: f64,
    pub batch_gap_threshold: f64,
    pub packets: usize,
    pub batches: usize,
    pub duration: f64,
    /// Mean gap between consecutive packets, seconds.
    pub mean_packet_iat: f64,
}

fn mean_and_cv(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let (n, sum) = xs.clone().fold((0usize, 0.0), |(n, s), x| (n + 1, s + x));
    let mean = sum / n as f64;
    let var = xs.map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
    let cv = if mean > 0.0 { var.sqrt() / mean } else { 0.0 };
    (mean, cv)
}

/// Computes the table statistics. A batch is a maximal run of packets whose
/// consecutive gaps are below `batch_gap_threshold`; inter-arrival statistics
/// are taken over the gaps between batch starts.
pub fn trace_stats(
    records: &[TraceRecord],
    link_rate: f64,
    batch_gap_threshold: f64,
) -> Result<TraceStats> {
    if records.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "trace statistics need at least 2 packets, got {}",
            records.len()
        )));
    }
    if !(link_rate > 0.0) || !(batch_gap_threshold >= 0.0) {
        return Err(Error::InvalidArgument(
            "link rate must be positive and the batch threshold non-negative".into(),
        ));
    }

    let mut batch_starts = vec![records[0].timestamp];
    for w in records.windows(2) {
        if w[1].timestamp - w[0].timestamp >= batch_gap_threshold {
            batch_starts.push(w[1].timestamp);
        }
    }
    if batch_starts.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "all packets fall in a single batch at threshold {batch_gap_threshold}s"
        )));
    }

    let first = records[0].timestamp;
    let last = records[records.len() - 1].timestamp;
    let duration = last - first;
    if !(duration > 0.0) {
        return Err(Error::InvalidArgument("trace spans zero time".into()));
    }

    let (mean_iat, cv_iat) = mean_and_cv(batch_starts.windows(2).map(|w| w[1] - w[0]));
    let (mean_bits, cv_service) = mean_and_cv(records.iter().map(|r| r.size_bits / link_rate));
    let total_bits: f64 = records.iter().map(|r| r.size_bits).sum();

    Ok(TraceStats {
        load: total_bits / duration,
        mean_iat,
        cv_iat,
        mean_size_bytes: mean_bits * link_rate / 8.0,
        cv_service,
        mean_batch_size: records.len() as f64 / batch_starts.len() as f64,
        link_rate,
        batch_gap_threshold,
        packets: records.len(),
        batches: batch_starts.len(),
        duration,
        mean_packet_iat: duration / (records.len() - 1) as f64,
    })
}

/// Downlink characteristics of the three cloud-gaming video resolutions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StadiaProfile {
    pub name: &'static str,
    pub load_mbps: f64,
    pub mean_iat_ms: f64,
    pub cv_iat: f64,
    pub mean_size_bytes: f64,
    pub cv_service: f64,
    pub mean_batch_size: f64,
    /// PFLL allocation measured on the real traces, Mb/s.
    pub reference_pfll_mbps: f64,
}

pub const STADIA_PROFILES: [StadiaProfile; 3] = [
    StadiaProfile {
        name: "720p",
        load_mbps: 10.25,
        mean_iat_ms: 1.700,
        cv_iat: 0.97,
        mean_size_bytes: 997.5,
        cv_service: 0.40,
        mean_batch_size: 2.18,
        reference_pfll_mbps: 65.0,
    },
    StadiaProfile {
        name: "1080p",
        load_mbps: 27.47,
        mean_iat_ms: 1.417,
        cv_iat: 0.94,
        mean_size_bytes: 1123.2,
        cv_service: 0.23,
        mean_batch_size: 4.33,
        reference_pfll_mbps: 50.0,
    },
    StadiaProfile {
        name: "2160p",
        load_mbps: 39.89,
        mean_iat_ms: 1.293,
        cv_iat: 2.87,
        mean_size_bytes: 1144.2,
        cv_service: 0.19,
        mean_batch_size: 5.74,
        reference_pfll_mbps: 30.0,
    },
];

impl StadiaProfile {
    pub fn by_name(name: &str) -> Option<&'static StadiaProfile> {
        STADIA_PROFILES.iter().find(|p| p.name == name)
    }

    /// Table values as [`TraceStats`] against a link of `link_rate` bits/s.
    pub fn stats(&self, link_rate: f64) -> TraceStats {
        let mean_iat = self.mean_iat_ms * 1e-3;
        TraceStats {
            load: self.load_mbps * 1e6,
            mean_iat,
            cv_iat: self.cv_iat,
            mean_size_bytes: self.mean_size_bytes,
            cv_service: self.cv_service,
            mean_batch_size: self.mean_batch_size,
            link_rate,
            batch_gap_threshold: DEFAULT_BATCH_GAP,
            packets: 0,
            batches: 0,
            duration: 0.0,
            mean_packet_iat: mean_iat / self.mean_batch_size,
        }
    }
}

/// Distribution of the number of packets per batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BatchSize {
    Fixed { packets: u32 },
    /// Geometric on {1, 2, ...}.
    Geometric { mean: f64 },
}

impl BatchSize {
    pub fn mean(&self) -> f64 {
        match *self {
            BatchSize::Fixed { packets } => packets as f64,
            BatchSize::Geometric { mean } => mean,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            BatchSize::Fixed { packets } if packets >= 1 => Ok(()),
            BatchSize::Geometric { mean } if mean.is_finite() && mean >= 1.0 => Ok(()),
            other => Err(Error::InvalidArgument(format!(
                "batch size must be at least one packet: {other:?}"
            ))),
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        match *self {
            BatchSize::Fixed { packets } => packets,
            BatchSize::Geometric { mean } => {
                if mean <= 1.0 {
                    1
                } else {
                    let geo = Geometric::new(1.0 / mean).expect("validated mean");
                    let extra = geo.sample(rng);
                    1 + extra.min(u32::MAX as u64 - 1) as u32
                }
            }
        }
    }
}

/// Packet arrival process of one flow.
#[derive(Debug, Clone)]
pub enum ArrivalModel {
    Poisson {
        rate: f64,
    },
    TraceReplay {
        records: Arc<[TraceRecord]>,
        looping: bool,
    },
    /// Batches of packets spaced `intra_batch_gap` apart. After the last
    /// packet of a batch the source idles `min_idle + Exp` so that batch
    /// starts occur at `batch_rate` on average.
    BatchPoisson {
        batch_rate: f64,
        batch_size: BatchSize,
        intra_batch_gap: f64,
        min_idle: f64,
    },
}

impl ArrivalModel {
    pub fn poisson(rate: f64) -> Self {
        ArrivalModel::Poisson { rate }
    }

    pub fn trace(records: impl Into<Arc<[TraceRecord]>>, looping: bool) -> Self {
        ArrivalModel::TraceReplay {
            records: records.into(),
            looping,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ArrivalModel::Poisson { rate } => {
                if rate.is_finite() && *rate > 0.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidArgument(format!(
                        "Poisson rate must be positive, got {rate}"
                    )))
                }
            }
            ArrivalModel::TraceReplay { records, looping } => {
                if records.is_empty() {
                    return Err(Error::EmptyTrace);
                }
                if *looping && !(records[records.len() - 1].timestamp > 0.0) {
                    return Err(Error::InvalidArgument(
                        "a looping trace needs a positive duration".into(),
                    ));
                }
                Ok(())
            }
            ArrivalModel::BatchPoisson { .. } => self.batch_idle_exp_mean().map(|_| ()),
        }
    }

    /// Mean of the exponential part of the idle period between batches.
    fn batch_idle_exp_mean(&self) -> Result<f64> {
        let ArrivalModel::BatchPoisson {
            batch_rate,
            batch_size,
            intra_batch_gap,
            min_idle,
        } = *self
        else {
            return Err(Error::InvalidArgument("not a batch model".into()));
        };
        batch_size.validate()?;
        if !(batch_rate.is_finite() && batch_rate > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "batch rate must be positive, got {batch_rate}"
            )));
        }
        if !(intra_batch_gap >= 0.0 && min_idle >= 0.0) {
            return Err(Error::InvalidArgument(
                "batch gaps must be non-negative".into(),
            ));
        }
        let exp_mean =
            1.0 / batch_rate - (batch_size.mean() - 1.0) * intra_batch_gap - min_idle;
        if !(exp_mean > 0.0) {
            return Err(Error::Infeasible(format!(
                "mean batch spacing {:.3e}s cannot hold batches of {} packets {:.1e}s apart plus a {:.1e}s idle floor",
                1.0 / batch_rate,
                batch_size.mean(),
                intra_batch_gap,
                min_idle
            )));
        }
        Ok(exp_mean)
    }

    /// Long-run packet rate, when defined by the model parameters.
    pub fn mean_rate(&self) -> Option<f64> {
        match self {
            ArrivalModel::Poisson { rate } => Some(*rate),
            ArrivalModel::TraceReplay { records, .. } => {
                let span = records.last()?.timestamp;
                (span > 0.0).then(|| records.len() as f64 / span)
            }
            ArrivalModel::BatchPoisson {
                batch_rate,
                batch_size,
                ..
            } => Some(batch_rate * batch_size.mean()),
        }
    }

    pub fn summary(&self) -> serde_json::Value {
        match self {
            ArrivalModel::Poisson { rate } => json!({"kind": "poisson", "rate": rate}),
            ArrivalModel::TraceReplay { records, looping } => json!({
                "kind": "trace",
                "records": records.len(),
                "duration_s": records.last().map(|r| r.timestamp),
                "loop": looping,
            }),
            ArrivalModel::BatchPoisson {
                batch_rate,
                batch_size,
                intra_batch_gap,
                min_idle,
            } => json!({
                "kind": "batch_poisson",
                "batch_rate": batch_rate,
                "batch_size": batch_size,
                "intra_batch_gap": intra_batch_gap,
                "min_idle": min_idle,
            }),
        }
    }
}

/// Arrival epoch of one or more packets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arrival {
    pub time: f64,
    pub count: u32,
}

/// Stateful generator of arrival epochs for one [`ArrivalModel`].
#[derive(Debug, Clone)]
pub struct ArrivalProcess {
    model: ArrivalModel,
    clock: f64,
    trace_index: usize,
    loops: u64,
    exp: Option<Exp<f64>>,
    idle_floor: f64,
}

impl ArrivalProcess {
    pub fn new(model: ArrivalModel) -> Result<Self> {
        model.validate()?;
        let (exp, idle_floor) = match &model {
            ArrivalModel::Poisson { rate } => (Some(exp_with_rate(*rate)?), 0.0),
            ArrivalModel::BatchPoisson { min_idle, .. } => {
                let mean = model.batch_idle_exp_mean()?;
                (Some(exp_with_rate(1.0 / mean)?), *min_idle)
            }
            ArrivalModel::TraceReplay { .. } => (None, 0.0),
        };
        Ok(Self {
            model,
            clock: 0.0,
            trace_index: 0,
            loops: 0,
            exp,
            idle_floor,
        })
    }

    /// Next arrival epoch, or `None` once a non-looping trace is exhausted.
    ///
    /// Poisson draws an exponential gap from the previous arrival. A looping
    /// trace restarts with every timestamp shifted by the trace duration (the
    /// last timestamp), so the wrap gap equals the first timestamp. Batch
    /// epochs follow the previous batch's last packet by an idle period.
    pub fn next_arrival<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Option<Arrival> {
        match &self.model {
            ArrivalModel::Poisson { .. } => {
                self.clock += self.exp.as_ref().expect("poisson exp").sample(rng);
                Some(Arrival {
                    time: self.clock,
                    count: 1,
                })
            }
            ArrivalModel::TraceReplay { records, looping } => {
                if self.trace_index == records.len() {
                    if !looping {
                        return None;
                    }
                    self.trace_index = 0;
                    self.loops += 1;
                }
                let span = records[records.len() - 1].timestamp;
                let time = records[self.trace_index].timestamp + self.loops as f64 * span;
                self.trace_index += 1;
                self.clock = time;
                Some(Arrival { time, count: 1 })
            }
            ArrivalModel::BatchPoisson {
                batch_size,
                intra_batch_gap,
                ..
            } => {
                let idle = self.idle_floor + self.exp.as_ref().expect("batch exp").sample(rng);
                let time = self.clock + idle;
                let count = batch_size.sample(rng);
                self.clock = time + (count - 1) as f64 * intra_batch_gap;
                Some(Arrival { time, count })
            }
        }
    }

    pub fn model(&self) -> &ArrivalModel {
        &self.model
    }
}

fn exp_with_rate(rate: f64) -> Result<Exp<f64>> {
    Exp::new(rate).map_err(|e| Error::InvalidArgument(format!("exponential rate {rate}: {e}")))
}

/// Packet size distribution of one flow, in bits.
#[derive(Debug, Clone)]
pub enum SizeModel {
    Exponential { mean_bits: f64 },
    Deterministic { bits: f64 },
    /// Sizes taken in order from a trace, cycling at the end.
    Empirical { sizes: Arc<[f64]> },
}

impl SizeModel {
    pub fn from_trace(records: &[TraceRecord]) -> Self {
        SizeModel::Empirical {
            sizes: records.iter().map(|r| r.size_bits).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            SizeModel::Exponential { mean_bits } => mean_bits.is_finite() && *mean_bits > 0.0,
            SizeModel::Deterministic { bits } => bits.is_finite() && *bits > 0.0,
            SizeModel::Empirical { sizes } => {
                !sizes.is_empty() && sizes.iter().all(|s| s.is_finite() && *s > 0.0)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "packet sizes must be positive: {}",
                self.summary()
            )))
        }
    }

    pub fn mean_bits(&self) -> f64 {
        match self {
            SizeModel::Exponential { mean_bits } => *mean_bits,
            SizeModel::Deterministic { bits } => *bits,
            SizeModel::Empirical { sizes } => sizes.iter().sum::<f64>() / sizes.len() as f64,
        }
    }

    pub fn cv(&self) -> f64 {
        match self {
            SizeModel::Exponential { .. } => 1.0,
            SizeModel::Deterministic { .. } => 0.0,
            SizeModel::Empirical { sizes } => mean_and_cv(sizes.iter().copied()).1,
        }
    }

    pub fn summary(&self) -> serde_json::Value {
        match self {
            SizeModel::Exponential { mean_bits } => {
                json!({"kind": "exponential", "mean_bits": mean_bits})
            }
            SizeModel::Deterministic { bits } => json!({"kind": "deterministic", "bits": bits}),
            SizeModel::Empirical { sizes } => json!({
                "kind": "empirical",
                "samples": sizes.len(),
                "mean_bits": self.mean_bits(),
            }),
        }
    }
}

/// Stateful sampler for a [`SizeModel`].
#[derive(Debug, Clone)]
pub struct SizeSampler {
    model: SizeModel,
    exp: Option<Exp<f64>>,
    index: usize,
}

impl SizeSampler {
    pub fn new(model: SizeModel) -> Result<Self> {
        model.validate()?;
        let exp = match &model {
            SizeModel::Exponential { mean_bits } => Some(exp_with_rate(1.0 / mean_bits)?),
            _ => None,
        };
        Ok(Self {
            model,
            exp,
            index: 0,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> f64 {
        match &self.model {
            SizeModel::Exponential { .. } => self.exp.as_ref().expect("exp sizes").sample(rng),
            SizeModel::Deterministic { bits } => *bits,
            SizeModel::Empirical { sizes } => {
                let s = sizes[self.index];
                self.index = (self.index + 1) % sizes.len();
                s
            }
        }
    }
}

/// Knobs of the synthetic trace generator that the table does not pin down.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthOptions {
    /// Spacing of packets inside a batch, seconds.
    pub intra_batch_gap: f64,
    /// Idle floor between batches, keeping them separable by the batch
    /// detector. Ignored when the mean batch size is one.
    pub min_idle: f64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            intra_batch_gap: 10e-6,
            min_idle: 2.0 * DEFAULT_BATCH_GAP,
        }
    }
}

/// Generates a batch-arrival trace whose load, mean batch spacing, mean packet
/// size and mean batch size follow `stats`. Packet sizes are gamma distributed
/// with the CV of `stats.cv_service`, rounded to whole bytes.
pub fn synth_stadia_like<R: Rng + ?Sized>(
    stats: &TraceStats,
    duration: f64,
    rng: &mut R,
) -> Result<Vec<TraceRecord>> {
    synth_with_options(stats, duration, SynthOptions::default(), rng)
}

pub fn synth_with_options<R: Rng + ?Sized>(
    stats: &TraceStats,
    duration: f64,
    opts: SynthOptions,
    rng: &mut R,
) -> Result<Vec<TraceRecord>> {
    let positive = [
        ("load", stats.load),
        ("mean_iat", stats.mean_iat),
        ("mean_size_bytes", stats.mean_size_bytes),
        ("mean_batch_size", stats.mean_batch_size),
        ("duration", duration),
    ];
    for (name, v) in positive {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
        }
    }
    if stats.mean_batch_size < 1.0 || stats.cv_service < 0.0 {
        return Err(Error::InvalidArgument(
            "mean batch size must be >= 1 and cv_service >= 0".into(),
        ));
    }
    let implied_load = stats.mean_batch_size * stats.mean_size_bytes * 8.0 / stats.mean_iat;
    if (implied_load - stats.load).abs() > 0.05 * stats.load {
        return Err(Error::Infeasible(format!(
            "load {:.4e} b/s is inconsistent with E[sigma]*E[L]/E[tau] = {:.4e} b/s",
            stats.load, implied_load
        )));
    }

    let batch_size = if stats.mean_batch_size == 1.0 {
        BatchSize::Fixed { packets: 1 }
    } else {
        BatchSize::Geometric {
            mean: stats.mean_batch_size,
        }
    };
    let min_idle = if stats.mean_batch_size == 1.0 { 0.0 } else { opts.min_idle };
    let mut process = ArrivalProcess::new(ArrivalModel::BatchPoisson {
        batch_rate: 1.0 / stats.mean_iat,
        batch_size,
        intra_batch_gap: opts.intra_batch_gap,
        min_idle,
    })?;

    let gamma = if stats.cv_service > 0.0 {
        let shape = 1.0 / (stats.cv_service * stats.cv_service);
        let scale = stats.mean_size_bytes / shape;
        Some(Gamma::new(shape, scale).map_err(|e| Error::InvalidArgument(e.to_string()))?)
    } else {
        None
    };

    let mut records = Vec::new();
    'gen: while let Some(arrival) = process.next_arrival(rng) {
        for k in 0..arrival.count {
            let t = arrival.time + k as f64 * opts.intra_batch_gap;
            if t > duration {
                break 'gen;
            }
            let bytes = match &gamma {
                Some(g) => g.sample(rng).round().max(1.0) as u64,
                None => stats.mean_size_bytes.round().max(1.0) as u64,
            };
            records.push(TraceRecord::new(t, bytes));
        }
    }
    if records.len() < 2 {
        return Err(Error::Infeasible(format!(
            "duration {duration}s produced fewer than two packets"
        )));
    }
    Ok(records)
}
