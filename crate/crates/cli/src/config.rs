// SPDX-License-Identifier: Apache-2.0

//! TOML configuration for `simulate` and `sweep`.

use std::path::{Path, PathBuf};

use llr_core::sim::{CountedFlows, DEFAULT_MAX_QUEUE, DEFAULT_WARMUP};
use llr_core::traffic::{self, DEFAULT_BATCH_GAP};
use llr_core::{ArrivalModel, BatchSize, FlowSpec, Horizon, SimConfig, SizeModel, StadiaProfile, SweepConfig, TraceRecord};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// RNG stream for synthetic DS traces, apart from the simulator's streams.
const SYNTH_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunFile {
    /// Transmitter rate, bits/second.
    pub link_rate: f64,
    #[serde(default = "default_warmup")]
    pub warmup: f64,
    #[serde(default = "default_max_queue")]
    pub max_queue: usize,
    /// Gap separating DS batches, seconds; 0 treats every packet as a batch.
    #[serde(default)]
    pub batch_gap: f64,
    pub horizon: Option<HorizonFile>,
    pub ds: FlowFile,
    pub nds: Option<FlowFile>,
    pub sweep: Option<SweepFile>,
}

fn default_warmup() -> f64 {
    DEFAULT_WARMUP
}

fn default_max_queue() -> usize {
    DEFAULT_MAX_QUEUE
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HorizonFile {
    pub time: Option<f64>,
    pub packets: Option<u64>,
    #[serde(default)]
    pub count: CountedFlows,
}

impl From<&HorizonFile> for Horizon {
    fn from(h: &HorizonFile) -> Self {
        Horizon {
            time: h.time,
            packets: h.packets,
            count: h.count,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowFile {
    /// Optional for the NDS flow of a sweep, whose rate comes from the grid.
    pub arrivals: Option<ArrivalsFile>,
    /// Defaults to the trace sizes for trace and synthetic arrivals.
    pub sizes: Option<SizesFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ArrivalsFile {
    /// Packets/second.
    Poisson { rate: f64 },
    Trace {
        path: PathBuf,
        #[serde(default = "default_true", rename = "loop")]
        looping: bool,
    },
    BatchPoisson {
        batch_rate: f64,
        batch_size: BatchSize,
        #[serde(default)]
        intra_batch_gap: f64,
        #[serde(default)]
        min_idle: f64,
    },
    /// Generated from a built-in video profile; looped during the run.
    Synthetic { profile: String, duration: f64 },
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SizesFile {
    Exponential { mean_bits: f64 },
    Deterministic { bits: f64 },
    Trace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RateUnit {
    /// Packets/second.
    #[default]
    Pps,
    /// Bits/second, converted with the NDS mean packet size.
    Bps,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepFile {
    pub start: f64,
    pub stop: f64,
    pub step: Option<f64>,
    pub points: Option<usize>,
    #[serde(default)]
    pub unit: RateUnit,
    #[serde(default = "default_true")]
    pub parallel: bool,
    /// Per-point horizon; defaults to the top-level horizon.
    pub budget: Option<HorizonFile>,
}

impl RunFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

/// A resolved flow, plus the profile it was synthesized from.
struct Flow {
    spec: FlowSpec,
    profile: Option<&'static StadiaProfile>,
}

fn load_trace_file(path: &Path) -> Result<Vec<TraceRecord>, CliError> {
    let file = std::fs::File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    traffic::load_trace(std::io::BufReader::new(file)).map_err(CliError::from)
}

fn resolve_flow(
    name: &str,
    file: &FlowFile,
    base_dir: &Path,
    link_rate: f64,
    seed: u64,
    rate_required: bool,
) -> Result<Flow, CliError> {
    let mut trace_sizes = None;
    let mut profile = None;
    let arrivals = match &file.arrivals {
        None if rate_required => return Err(CliError::Config(format!("[{name}.arrivals] is required"))),
        // Placeholder; the sweep sets the rate at each grid point.
        None => ArrivalModel::poisson(1.0),
        Some(ArrivalsFile::Poisson { rate }) => ArrivalModel::poisson(*rate),
        Some(ArrivalsFile::Trace { path, looping }) => {
            let records = load_trace_file(&base_dir.join(path))?;
            trace_sizes = Some(SizeModel::from_trace(&records));
            ArrivalModel::trace(records, *looping)
        }
        Some(ArrivalsFile::BatchPoisson {
            batch_rate,
            batch_size,
            intra_batch_gap,
            min_idle,
        }) => ArrivalModel::BatchPoisson {
            batch_rate: *batch_rate,
            batch_size: *batch_size,
            intra_batch_gap: *intra_batch_gap,
            min_idle: *min_idle,
        },
        Some(ArrivalsFile::Synthetic { profile: p, duration }) => {
            let found = StadiaProfile::by_name(p).ok_or_else(|| {
                CliError::Config(format!("[{name}.arrivals] unknown profile {p:?}; use 720p, 1080p or 2160p"))
            })?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(SYNTH_STREAM);
            let records = traffic::synth_stadia_like(&found.stats(link_rate), *duration, &mut rng)?;
            profile = Some(found);
            trace_sizes = Some(SizeModel::from_trace(&records));
            ArrivalModel::trace(records, true)
        }
    };
    let sizes = match (&file.sizes, trace_sizes) {
        (Some(SizesFile::Exponential { mean_bits }), _) => SizeModel::Exponential { mean_bits: *mean_bits },
        (Some(SizesFile::Deterministic { bits }), _) => SizeModel::Deterministic { bits: *bits },
        (Some(SizesFile::Trace) | None, Some(sizes)) => sizes,
        (Some(SizesFile::Trace), None) => {
            return Err(CliError::Config(format!(
                "[{name}.sizes] kind = \"trace\" needs trace or synthetic arrivals"
            )))
        }
        (None, None) => return Err(CliError::Config(format!("[{name}.sizes] is required"))),
    };
    Ok(Flow {
        spec: FlowSpec::new(arrivals, sizes),
        profile,
    })
}

/// Everything a run needs, resolved from the file.
pub struct Resolved {
    pub sim: SimConfig,
    pub sweep: Option<SweepConfig>,
    pub sweep_unit: RateUnit,
    pub profile: Option<&'static StadiaProfile>,
}

impl RunFile {
    pub fn resolve(&self, base_dir: &Path, seed: u64, for_sweep: bool) -> Result<Resolved, CliError> {
        let ds = resolve_flow("ds", &self.ds, base_dir, self.link_rate, seed, true)?;
        let nds = self
            .nds
            .as_ref()
            .map(|f| resolve_flow("nds", f, base_dir, self.link_rate, seed, !for_sweep))
            .transpose()?;

        let sweep_file = match (for_sweep, &self.sweep) {
            (true, None) => return Err(CliError::Config("a [sweep] section is required".into())),
            (true, Some(s)) => Some(s),
            (false, _) => None,
        };
        let horizon = match (&self.horizon, sweep_file.and_then(|s| s.budget.as_ref())) {
            (_, Some(b)) if for_sweep => Horizon::from(b),
            (Some(h), _) => Horizon::from(h),
            (None, _) => return Err(CliError::Config("a [horizon] section is required".into())),
        };

        let mut sim = SimConfig::new(self.link_rate, ds.spec, horizon, seed);
        sim.nds = nds.map(|f| f.spec);
        sim.warmup = self.warmup;
        sim.max_queue = self.max_queue;
        sim.batch_gap = if ds.profile.is_some() && self.batch_gap == 0.0 {
            DEFAULT_BATCH_GAP
        } else {
            self.batch_gap
        };
        sim.validate()?;

        let (sweep, sweep_unit) = match sweep_file {
            None => (None, RateUnit::Pps),
            Some(s) => {
                if sim.nds.is_none() {
                    return Err(CliError::Config("a sweep needs an [nds] section with sizes".into()));
                }
                let to_pps = match s.unit {
                    RateUnit::Pps => 1.0,
                    RateUnit::Bps => 1.0 / nds_mean_bits(&sim),
                };
                let cfg = SweepConfig {
                    start: s.start * to_pps,
                    stop: s.stop * to_pps,
                    step: s.step.map(|x| x * to_pps),
                    points: s.points,
                    budget: None,
                    parallel: s.parallel,
                };
                (Some(cfg), s.unit)
            }
        };

        Ok(Resolved {
            sim,
            sweep,
            sweep_unit,
            profile: ds.profile,
        })
    }
}

pub fn nds_mean_bits(sim: &SimConfig) -> f64 {
    sim.nds.as_ref().map_or(f64::NAN, |n| n.sizes.mean_bits())
}
