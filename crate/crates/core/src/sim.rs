// SPDX-License-Identifier: Apache-2.0

//! Event-driven simulation of a single FIFO link shared by a DS and an NDS
//! flow.
//!
//! The link is an unbounded buffer in front of one transmitter of rate
//! `link_rate` bits/s. Events are packet arrivals and transmission
//! completions, kept in a time-ordered calendar. Simultaneous events resolve
//! as: completion, DS arrival, NDS arrival, then generation order. Runs are a
//! pure function of the configuration and seed.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};
use std::fmt;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::traffic::{ArrivalModel, ArrivalProcess, SizeModel, SizeSampler, TraceRecord};

pub const DEFAULT_WARMUP: f64 = 0.1;
pub const DEFAULT_MAX_QUEUE: usize = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Flow {
    Ds,
    Nds,
}

impl Flow {
    pub fn as_str(&self) -> &'static str {
        match self {
            Flow::Ds => "ds",
            Flow::Nds => "nds",
        }
    }
}

impl fmt::Display for Flow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Arrival and size models of one flow.
#[derive(Debug, Clone)]
pub struct FlowSpec {
    pub arrivals: ArrivalModel,
    pub sizes: SizeModel,
}

impl FlowSpec {
    pub fn new(arrivals: ArrivalModel, sizes: SizeModel) -> Self {
        Self { arrivals, sizes }
    }

    /// Replays a trace with its own packet sizes.
    pub fn from_trace(records: &[TraceRecord], looping: bool) -> Self {
        Self {
            arrivals: ArrivalModel::trace(records.to_vec(), looping),
            sizes: SizeModel::from_trace(records),
        }
    }

    fn summary(&self) -> serde_json::Value {
        json!({"arrivals": self.arrivals.summary(), "sizes": self.sizes.summary()})
    }
}

/// Which departures count towards a packet budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CountedFlows {
    #[default]
    All,
    Ds,
    Nds,
}

impl CountedFlows {
    fn counts(&self, flow: Flow) -> bool {
        match self {
            CountedFlows::All => true,
            CountedFlows::Ds => flow == Flow::Ds,
            CountedFlows::Nds => flow == Flow::Nds,
        }
    }
}

/// Stop condition; the run ends at whichever limit is reached first.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Horizon {
    /// Simulated seconds.
    pub time: Option<f64>,
    /// Delivered packets.
    pub packets: Option<u64>,
    #[serde(default)]
    pub count: CountedFlows,
}

impl Horizon {
    pub fn packets(n: u64) -> Self {
        Self {
            time: None,
            packets: Some(n),
            count: CountedFlows::All,
        }
    }

    pub fn time(t: f64) -> Self {
        Self {
            time: Some(t),
            packets: None,
            count: CountedFlows::All,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.time.is_none() && self.packets.is_none() {
            return Err(Error::InvalidArgument(
                "horizon needs a time or packet limit".into(),
            ));
        }
        if let Some(t) = self.time {
            if !(t.is_finite() && t > 0.0) {
                return Err(Error::InvalidArgument(format!("horizon time must be positive, got {t}")));
            }
        }
        if self.packets == Some(0) {
            return Err(Error::InvalidArgument("packet budget must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    /// Transmitter rate, bits/second.
    pub link_rate: f64,
    pub ds: FlowSpec,
    pub nds: Option<FlowSpec>,
    pub horizon: Horizon,
    /// Fraction of each flow's samples discarded from the start.
    pub warmup: f64,
    pub seed: u64,
    /// RNG stream index for the NDS flow; sweeps vary it per point while the
    /// DS streams stay fixed.
    pub nds_stream: u64,
    /// Abort once this many packets wait in the buffer.
    pub max_queue: usize,
    /// Keep per-packet records in the result.
    pub record_packets: bool,
    /// Arrivals closer than this to the previous arrival of the same flow
    /// belong to the same batch. Zero makes every packet its own batch.
    pub batch_gap: f64,
}

impl SimConfig {
    pub fn new(link_rate: f64, ds: FlowSpec, horizon: Horizon, seed: u64) -> Self {
        Self {
            link_rate,
            ds,
            nds: None,
            horizon,
            warmup: DEFAULT_WARMUP,
            seed,
            nds_stream: 1,
            max_queue: DEFAULT_MAX_QUEUE,
            record_packets: false,
            batch_gap: 0.0,
        }
    }

    pub fn with_nds(mut self, nds: FlowSpec) -> Self {
        self.nds = Some(nds);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.link_rate.is_finite() && self.link_rate > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "link rate must be positive, got {}",
                self.link_rate
            )));
        }
        if !(0.0..=0.5).contains(&self.warmup) {
            return Err(Error::InvalidArgument(format!(
                "warmup must lie in [0, 0.5], got {}",
                self.warmup
            )));
        }
        if !(self.batch_gap.is_finite() && self.batch_gap >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "batch gap must be non-negative, got {}",
                self.batch_gap
            )));
        }
        if self.nds_stream == 0 {
            return Err(Error::InvalidArgument("NDS stream 0 is reserved for DS".into()));
        }
        self.horizon.validate()?;
        self.ds.arrivals.validate()?;
        self.ds.sizes.validate()?;
        if let Some(nds) = &self.nds {
            nds.arrivals.validate()?;
            nds.sizes.validate()?;
        }
        Ok(())
    }

    pub fn summary(&self) -> serde_json::Value {
        json!({
            "link_rate": self.link_rate,
            "ds": self.ds.summary(),
            "nds": self.nds.as_ref().map(FlowSpec::summary),
            "horizon": self.horizon,
            "warmup": self.warmup,
            "seed": self.seed,
            "nds_stream": self.nds_stream,
            "max_queue": self.max_queue,
            "batch_gap": self.batch_gap,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Packet {
    pub flow: Flow,
    pub seq: u64,
    pub arrival_time: f64,
    pub size_bits: f64,
    pub departure_time: f64,
}

impl Packet {
    pub fn delay(&self) -> f64 {
        self.departure_time - self.arrival_time
    }
}

/// Measurements for one flow.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FlowResult {
    pub arrived: u64,
    pub delivered: u64,
    /// Samples dropped as warmup.
    pub discarded: u64,
    pub delivered_bits: f64,
    /// Packets still buffered or in service when the run stopped.
    pub in_system: u64,
    pub first_arrival: Option<f64>,
    pub last_arrival: Option<f64>,
    /// Arrival batches, split at the configured batch gap.
    #[serde(default)]
    pub batches: u64,
    #[serde(default)]
    pub last_batch_start: Option<f64>,
    /// Sojourn times after warmup, in departure (= arrival) order.
    pub delays: Vec<f64>,
}

impl FlowResult {
    pub fn mean_delay(&self) -> Option<f64> {
        (!self.delays.is_empty()).then(|| self.delays.iter().sum::<f64>() / self.delays.len() as f64)
    }

    /// Mean gap between consecutive arrivals of this flow.
    pub fn mean_interarrival(&self) -> Option<f64> {
        match (self.first_arrival, self.last_arrival) {
            (Some(a), Some(b)) if self.arrived > 1 && b > a => Some((b - a) / (self.arrived - 1) as f64),
            _ => None,
        }
    }

    /// Mean gap between consecutive batch starts of this flow.
    pub fn mean_batch_interarrival(&self) -> Option<f64> {
        match (self.first_arrival, self.last_batch_start) {
            (Some(a), Some(b)) if self.batches > 1 && b > a => Some((b - a) / (self.batches - 1) as f64),
            _ => None,
        }
    }

    /// Measured arrival rate, packets/second.
    pub fn arrival_rate(&self) -> Option<f64> {
        self.mean_interarrival().map(|t| 1.0 / t)
    }

    /// Standard error of the mean delay from `batches` consecutive batch means.
    pub fn mean_delay_std_error(&self, batches: usize) -> Option<f64> {
        let n = self.delays.len();
        if batches < 2 || n < batches * 2 {
            return None;
        }
        let per = n / batches;
        let means: Vec<f64> = self
            .delays
            .chunks_exact(per)
            .take(batches)
            .map(|c| c.iter().sum::<f64>() / per as f64)
            .collect();
        let m = means.iter().sum::<f64>() / batches as f64;
        let var = means.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (batches - 1) as f64;
        Some((var / batches as f64).sqrt())
    }

    pub fn sorted_delays(&self) -> Vec<f64> {
        let mut v = self.delays.clone();
        v.sort_by(f64::total_cmp);
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub config: serde_json::Value,
    /// Simulated time at which the run stopped.
    pub duration: f64,
    pub ds: FlowResult,
    pub nds: FlowResult,
    /// Every delivered packet, when requested.
    pub packets: Option<Vec<Packet>>,
}

impl SimResult {
    pub fn flow(&self, flow: Flow) -> &FlowResult {
        match flow {
            Flow::Ds => &self.ds,
            Flow::Nds => &self.nds,
        }
    }

    /// Delivered bits/second of one flow.
    pub fn throughput(&self, flow: Flow) -> f64 {
        self.flow(flow).delivered_bits / self.duration
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EventKind {
    Departure,
    Arrival(Flow),
}

impl EventKind {
    fn rank(&self) -> u8 {
        match self {
            EventKind::Departure => 0,
            EventKind::Arrival(Flow::Ds) => 1,
            EventKind::Arrival(Flow::Nds) => 2,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    kind: EventKind,
    seq: u64,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // Reversed: BinaryHeap is a max-heap and the earliest event must pop first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.kind.rank().cmp(&self.kind.rank()))
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Expands an arrival process into individual sized packets.
struct PacketSource {
    process: ArrivalProcess,
    sizes: SizeSampler,
    arrival_rng: ChaCha8Rng,
    size_rng: ChaCha8Rng,
    gap: f64,
    batch_time: f64,
    batch_left: u32,
    batch_pos: u32,
}

impl PacketSource {
    fn new(spec: &FlowSpec, seed: u64, stream: u64) -> Result<Self> {
        let gap = match spec.arrivals {
            ArrivalModel::BatchPoisson {
                intra_batch_gap, ..
            } => intra_batch_gap,
            _ => 0.0,
        };
        Ok(Self {
            process: ArrivalProcess::new(spec.arrivals.clone())?,
            sizes: SizeSampler::new(spec.sizes.clone())?,
            arrival_rng: seeded(seed, 2 * stream),
            size_rng: seeded(seed, 2 * stream + 1),
            gap,
            batch_time: 0.0,
            batch_left: 0,
            batch_pos: 0,
        })
    }

    fn next_packet(&mut self) -> Option<(f64, f64)> {
        if self.batch_left == 0 {
            let arrival = self.process.next_arrival(&mut self.arrival_rng)?;
            self.batch_time = arrival.time;
            self.batch_left = arrival.count;
            self.batch_pos = 0;
        }
        let t = self.batch_time + self.batch_pos as f64 * self.gap;
        self.batch_pos += 1;
        self.batch_left -= 1;
        Some((t, self.sizes.sample(&mut self.size_rng)))
    }
}

fn seeded(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

struct FlowState {
    source: PacketSource,
    next: Option<(f64, f64)>,
    result: FlowResult,
}

impl FlowState {
    fn new(spec: &FlowSpec, seed: u64, stream: u64) -> Result<Self> {
        let mut source = PacketSource::new(spec, seed, stream)?;
        let next = source.next_packet();
        Ok(Self {
            source,
            next,
            result: FlowResult::default(),
        })
    }
}

/// Runs one simulation.
pub fn run(config: &SimConfig) -> Result<SimResult> {
    config.validate()?;

    let mut flows: Vec<(Flow, FlowState)> = vec![(Flow::Ds, FlowState::new(&config.ds, config.seed, 0)?)];
    if let Some(nds) = &config.nds {
        flows.push((Flow::Nds, FlowState::new(nds, config.seed, config.nds_stream)?));
    }
    let slot = |flow: Flow| if flow == Flow::Ds { 0 } else { 1 };

    let mut calendar = BinaryHeap::new();
    let mut seq = 0u64;
    for (flow, state) in &flows {
        if let Some((t, _)) = state.next {
            calendar.push(Event { time: t, kind: EventKind::Arrival(*flow), seq });
            seq += 1;
        }
    }

    let time_limit = config.horizon.time.unwrap_or(f64::INFINITY);
    let packet_limit = config.horizon.packets.unwrap_or(u64::MAX);
    let mut counted = 0u64;
    let mut queue: VecDeque<Packet> = VecDeque::new();
    let mut in_service: Option<Packet> = None;
    let mut records = config.record_packets.then(Vec::new);
    let mut now = 0.0;
    let mut packet_seq = 0u64;

    while let Some(event) = calendar.pop() {
        if event.time > time_limit {
            now = time_limit;
            break;
        }
        now = event.time;
        match event.kind {
            EventKind::Arrival(flow) => {
                let state = &mut flows[slot(flow)].1;
                let (t, size) = state.next.take().expect("scheduled arrival");
                let r = &mut state.result;
                r.arrived += 1;
                if r.last_arrival.is_none_or(|prev| t - prev >= config.batch_gap) {
                    r.batches += 1;
                    r.last_batch_start = Some(t);
                }
                r.first_arrival.get_or_insert(t);
                r.last_arrival = Some(t);
                let packet = Packet {
                    flow,
                    seq: packet_seq,
                    arrival_time: t,
                    size_bits: size,
                    departure_time: f64::NAN,
                };
                packet_seq += 1;

                if in_service.is_none() {
                    debug_assert!(queue.is_empty());
                    in_service = Some(packet);
                    calendar.push(Event {
                        time: now + size / config.link_rate,
                        kind: EventKind::Departure,
                        seq,
                    });
                    seq += 1;
                } else {
                    queue.push_back(packet);
                    if queue.len() > config.max_queue {
                        return Err(Error::Unstable {
                            queued: queue.len(),
                            time: now,
                            threshold: config.max_queue,
                        });
                    }
                }

                state.next = state.source.next_packet();
                if let Some((t_next, _)) = state.next {
                    calendar.push(Event { time: t_next, kind: EventKind::Arrival(flow), seq });
                    seq += 1;
                }
            }
            EventKind::Departure => {
                let mut done = in_service.take().expect("departure without packet in service");
                done.departure_time = now;
                let r = &mut flows[slot(done.flow)].1.result;
                r.delivered += 1;
                r.delivered_bits += done.size_bits;
                r.delays.push(done.delay());
                if let Some(recs) = records.as_mut() {
                    recs.push(done);
                }

                // Work conservation: the next packet starts the instant the
                // previous one leaves.
                if let Some(next) = queue.pop_front() {
                    calendar.push(Event {
                        time: now + next.size_bits / config.link_rate,
                        kind: EventKind::Departure,
                        seq,
                    });
                    seq += 1;
                    in_service = Some(next);
                }

                if config.horizon.count.counts(done.flow) {
                    counted += 1;
                    if counted >= packet_limit {
                        break;
                    }
                }
            }
        }
        debug_assert!(in_service.is_some() || queue.is_empty());
    }

    for packet in in_service.iter().chain(queue.iter()) {
        flows[slot(packet.flow)].1.result.in_system += 1;
    }

    let mut ds = FlowResult::default();
    let mut nds = FlowResult::default();
    for (flow, state) in flows {
        let mut r = state.result;
        let discard = (r.delays.len() as f64 * config.warmup).floor() as usize;
        r.delays.drain(..discard);
        r.discarded = discard as u64;
        match flow {
            Flow::Ds => ds = r,
            Flow::Nds => nds = r,
        }
    }

    if ds.delivered + nds.delivered == 0 {
        return Err(Error::EmptyResult("any"));
    }

    Ok(SimResult {
        config: config.summary(),
        duration: now,
        ds,
        nds,
        packets: records,
    })
}

/// Empirical cdf of a flow's delays at each grid point.
pub fn delay_cdf(result: &SimResult, flow: Flow, grid: &[f64]) -> Result<Vec<f64>> {
    let sorted = result.flow(flow).sorted_delays();
    empirical_cdf(&sorted, grid).ok_or(Error::EmptyResult(flow.as_str()))
}

/// Nearest-rank percentile of a flow's delays, `0 < p < 1`.
pub fn delay_percentile(result: &SimResult, flow: Flow, p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidArgument(format!("percentile must lie in (0, 1), got {p}")));
    }
    let sorted = result.flow(flow).sorted_delays();
    nearest_rank(&sorted, p).ok_or(Error::EmptyResult(flow.as_str()))
}

/// `P(X <= t)` over sorted samples.
pub fn empirical_cdf(sorted: &[f64], grid: &[f64]) -> Option<Vec<f64>> {
    if sorted.is_empty() {
        return None;
    }
    let n = sorted.len() as f64;
    Some(
        grid.iter()
            .map(|&t| sorted.partition_point(|&x| x <= t) as f64 / n)
            .collect(),
    )
}

/// Order statistic at rank `ceil(p n)` of sorted samples.
pub fn nearest_rank(sorted: &[f64], p: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let rank = (p * sorted.len() as f64).ceil() as usize;
    Some(sorted[rank.clamp(1, sorted.len()) - 1])
}

/// Writes `flow,arrival_s,departure_s,delay_s` rows for recorded packets.
pub fn write_packets_csv<W: Write>(result: &SimResult, mut out: W) -> Result<()> {
    let packets = result.packets.as_deref().ok_or_else(|| {
        Error::InvalidArgument("the run did not record packets (record_packets = false)".into())
    })?;
    writeln!(out, "flow,arrival_s,departure_s,delay_s")?;
    for p in packets {
        writeln!(
            out,
            "{},{:.9},{:.9},{:.9}",
            p.flow,
            p.arrival_time,
            p.departure_time,
            p.delay()
        )?;
    }
    out.flush()?;
    Ok(())
}
