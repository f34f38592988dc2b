// SPDX-License-Identifier: Apache-2.0

//! Subcommand implementations.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use llr_core::analytics::{self, LinkLoad, ServiceModel};
use llr_core::sim::{self, FlowResult};
use llr_core::traffic::{self, DEFAULT_BATCH_GAP};
use llr_core::{alloc, PacketUnits, StadiaProfile};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};

use crate::config::{self, RunFile};
use crate::figures;
use crate::manifest::{beside, Outcome};
use crate::CliError;

/// Service rate, given directly or as link rate and mean packet size.
#[derive(Debug, Args)]
#[group(id = "service", required = true, multiple = true)]
pub struct ServiceArgs {
    /// Service rate, packets/second.
    #[arg(long, conflicts_with = "link_rate")]
    mu: Option<f64>,
    /// Link rate, bits/second (needs --mean-size).
    #[arg(long, requires = "mean_size")]
    link_rate: Option<f64>,
    /// Mean packet size, bits.
    #[arg(long, requires = "link_rate")]
    mean_size: Option<f64>,
}

impl ServiceArgs {
    fn service(&self, cv: f64) -> Result<ServiceModel, CliError> {
        Ok(match (self.mu, self.link_rate, self.mean_size) {
            (Some(mu), _, _) => ServiceModel::from_rate(mu, cv)?,
            (None, Some(r), Some(l)) => ServiceModel::from_link(r, l, cv)?,
            _ => return Err(CliError::Usage("give --mu or --link-rate with --mean-size".into())),
        })
    }

    fn units(&self) -> Option<PacketUnits> {
        self.mean_size.and_then(|l| PacketUnits::new(l).ok())
    }

    fn params(&self) -> Value {
        json!({"mu": self.mu, "link_rate": self.link_rate, "mean_size_bits": self.mean_size})
    }
}

fn write_output(path: Option<&Path>, body: &str) -> Result<Vec<PathBuf>, CliError> {
    match path {
        Some(p) => {
            std::fs::write(p, body).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
            Ok(vec![p.to_path_buf()])
        }
        None => {
            std::io::stdout()
                .write_all(body.as_bytes())
                .map_err(|e| CliError::Io(format!("stdout: {e}")))?;
            Ok(Vec::new())
        }
    }
}

fn to_json(value: &impl serde::Serialize) -> String {
    serde_json::to_string_pretty(value).expect("serializable output") + "\n"
}

fn outcome(params: Value, seeds: Vec<u64>, outputs: Vec<PathBuf>) -> Outcome {
    let default_manifest = outputs.first().map(|p| beside(p));
    Outcome {
        params,
        seeds,
        outputs,
        default_manifest,
    }
}

#[derive(Debug, Args)]
pub struct LlrArgs {
    #[command(flatten)]
    service: ServiceArgs,
    /// Service-time coefficients of variation, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    cv: Vec<f64>,
    /// DS rates are `i/points` of the service rate for `i = 1..points`.
    #[arg(long, default_value_t = 100)]
    points: usize,
    /// CSV output file; stdout when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

pub fn llr(args: &LlrArgs) -> Result<Outcome, CliError> {
    if args.points < 2 {
        return Err(CliError::Usage("--points must be at least 2".into()));
    }
    let mut out = String::from("cs,lambda_s,mean_delay_s,mean_packets,one_over_lambda_s,lambda_s_plus\n");
    for &cv in &args.cv {
        let s = args.service.service(cv)?;
        let limit = analytics::llr_limit(&s);
        for i in 1..args.points {
            let ls = s.mu() * i as f64 / args.points as f64;
            let load = LinkLoad::new(ls, 0.0)?;
            let d = analytics::mean_delay(load, &s)?;
            let n = analytics::mean_packets(load, &s)?;
            writeln!(out, "{cv},{ls},{d},{n},{},{limit}", 1.0 / ls).unwrap();
        }
    }
    let outputs = write_output(args.output.as_deref(), &out)?;
    let params = json!({"service": args.service.params(), "cv": args.cv, "points": args.points});
    Ok(outcome(params, Vec::new(), outputs))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Strategy {
    Max,
    Pfll,
    Both,
}

#[derive(Debug, Args)]
pub struct AllocateArgs {
    #[command(flatten)]
    service: ServiceArgs,
    /// Service-time coefficient of variation.
    #[arg(long, default_value_t = 1.0)]
    cv: f64,
    /// DS arrival rate, packets/second.
    #[arg(long, required_unless_present = "ds_load", conflicts_with = "ds_load")]
    lambda_s: Option<f64>,
    /// DS load, bits/second (needs --link-rate and --mean-size).
    #[arg(long, requires = "mean_size")]
    ds_load: Option<f64>,
    #[arg(long, value_enum, default_value_t = Strategy::Both)]
    strategy: Strategy,
    /// JSON output file; stdout when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

pub fn allocate(args: &AllocateArgs) -> Result<Outcome, CliError> {
    let s = args.service.service(args.cv)?;
    let units = args.service.units();
    let ls = match (args.lambda_s, args.ds_load, units) {
        (Some(ls), _, _) => ls,
        (None, Some(bps), Some(u)) => u.to_pps(bps),
        _ => return Err(CliError::Usage("give --lambda-s, or --ds-load with --mean-size".into())),
    };
    let delay = |b: f64| -> Result<f64, CliError> { Ok(analytics::mean_delay(LinkLoad::new(ls, b)?, &s)?) };

    let mut m = Map::new();
    m.insert("lambda_s".into(), json!(ls));
    m.insert("mu".into(), json!(s.mu()));
    m.insert("cv".into(), json!(args.cv));
    m.insert("theta".into(), json!(s.theta()));
    m.insert("lambda_s_plus".into(), json!(analytics::llr_limit(&s)));
    let bplus = analytics::max_alloc(ls, &s)?;
    m.insert("beta".into(), json!(analytics::beta(ls, &s)?));
    m.insert("delay_at_zero".into(), json!(delay(0.0)?));
    if args.strategy != Strategy::Pfll {
        m.insert("max".into(), json!(bplus));
        m.insert("kappa_plus".into(), json!(analytics::kappa_plus(ls, &s)?));
        m.insert("delay_at_max".into(), json!(delay(bplus)?));
    }
    if args.strategy != Strategy::Max {
        let bstar = analytics::pfll_alloc(ls, &s)?;
        m.insert("pfll".into(), json!(bstar));
        m.insert("kappa_star".into(), json!(analytics::kappa_star(ls, &s)?));
        m.insert("delay_at_pfll".into(), json!(delay(bstar)?));
    }
    if let Some(u) = units {
        for key in ["lambda_s", "max", "pfll", "mu"] {
            if let Some(v) = m.get(key).and_then(Value::as_f64) {
                m.insert(format!("{key}_bps"), json!(u.to_bps(v)));
            }
        }
    }
    let outputs = write_output(args.output.as_deref(), &to_json(&m))?;
    let params = json!({
        "service": args.service.params(),
        "cv": args.cv,
        "lambda_s": args.lambda_s,
        "ds_load": args.ds_load,
        "strategy": format!("{:?}", args.strategy).to_lowercase(),
    });
    Ok(outcome(params, Vec::new(), outputs))
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// TOML run description.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: u64,
    /// Summary CSV; stdout when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Per-packet CSV of every delivered packet.
    #[arg(long)]
    packets: Option<PathBuf>,
}

fn config_dir(path: &Path) -> &Path {
    path.parent().unwrap_or(Path::new("."))
}

fn summary_row(out: &mut String, name: &str, r: &FlowResult, duration: f64) {
    let sorted = r.sorted_delays();
    let pct = |p| sim::nearest_rank(&sorted, p).unwrap_or(f64::NAN);
    let opt = |v: Option<f64>| v.unwrap_or(f64::NAN);
    writeln!(
        out,
        "{name},{},{},{},{},{},{},{},{},{},{},{},{duration}",
        r.arrived,
        r.delivered,
        r.discarded,
        r.in_system,
        opt(r.mean_delay()),
        opt(r.mean_delay_std_error(32)),
        pct(0.5),
        pct(0.9),
        pct(0.99),
        r.delivered_bits / duration,
        opt(r.mean_interarrival()),
    )
    .unwrap();
}

pub fn simulate(args: &SimulateArgs) -> Result<Outcome, CliError> {
    let file = RunFile::load(&args.config)?;
    let resolved = file.resolve(config_dir(&args.config), args.seed, false)?;
    let mut cfg = resolved.sim;
    cfg.record_packets = args.packets.is_some();
    let res = sim::run(&cfg)?;

    let mut out = String::from(
        "flow,arrived,delivered,discarded,in_system,mean_delay_s,delay_std_error_s,p50_s,p90_s,p99_s,throughput_bps,mean_interarrival_s,duration_s\n",
    );
    summary_row(&mut out, "ds", &res.ds, res.duration);
    if cfg.nds.is_some() {
        summary_row(&mut out, "nds", &res.nds, res.duration);
    }
    let mut outputs = write_output(args.output.as_deref(), &out)?;
    if let Some(path) = &args.packets {
        let file = std::fs::File::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        sim::write_packets_csv(&res, std::io::BufWriter::new(file))?;
        outputs.push(path.clone());
    }
    let params = json!({"config_file": args.config, "config": file, "resolved": cfg.summary()});
    Ok(outcome(params, vec![args.seed], outputs))
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// TOML run description with a [sweep] section.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: u64,
    /// Allocation report JSON; stdout when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Plot-ready curves CSV.
    #[arg(long)]
    curves: Option<PathBuf>,
}

pub fn sweep(args: &SweepArgs) -> Result<Outcome, CliError> {
    let file = RunFile::load(&args.config)?;
    let resolved = file.resolve(config_dir(&args.config), args.seed, true)?;
    let sweep = resolved.sweep.expect("sweep resolved");
    let mut report = alloc::empirical_pfll(&resolved.sim, &sweep)?;

    let nds_bits = config::nds_mean_bits(&resolved.sim);
    if let Some(p) = resolved.profile {
        report.notes.push(format!(
            "reference PFLL allocation on the real {} traces: {} Mb/s",
            p.name, p.reference_pfll_mbps
        ));
    }
    for w in &report.warnings {
        log::warn!("{w}");
    }

    let mut value = serde_json::to_value(&report).expect("report serializes");
    let extra = json!({
        "unit": resolved.sweep_unit,
        "nds_mean_bits": nds_bits,
        "empirical_max_bps": report.empirical_max * nds_bits,
        "empirical_pfll_bps": report.empirical_pfll * nds_bits,
        "g_argmax_bps": report.g_argmax * nds_bits,
        "reference_pfll_bps": resolved.profile.map(|p| p.reference_pfll_mbps * 1e6),
    });
    if let (Value::Object(m), Value::Object(e)) = (&mut value, extra) {
        m.extend(e);
    }
    let mut outputs = write_output(args.output.as_deref(), &to_json(&value))?;
    if let Some(path) = &args.curves {
        outputs.extend(write_output(Some(path), &report.curves_csv())?);
    }
    let params = json!({"config_file": args.config, "config": file, "resolved": resolved.sim.summary(), "sweep": sweep});
    Ok(outcome(params, vec![args.seed], outputs))
}

#[derive(Debug, Args)]
pub struct TraceStatsArgs {
    /// Trace CSV with a `timestamp_s,size_bytes` header.
    #[arg(long)]
    trace: PathBuf,
    /// Link rate the service statistics refer to, bits/second.
    #[arg(long)]
    link_rate: f64,
    /// Packets closer than this belong to one batch, seconds.
    #[arg(long, default_value_t = DEFAULT_BATCH_GAP)]
    batch_gap: f64,
    /// JSON output file; stdout when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

pub fn trace_stats(args: &TraceStatsArgs) -> Result<Outcome, CliError> {
    let file = std::fs::File::open(&args.trace).map_err(|e| CliError::Io(format!("{}: {e}", args.trace.display())))?;
    let records = traffic::load_trace(std::io::BufReader::new(file))?;
    let stats = traffic::trace_stats(&records, args.link_rate, args.batch_gap)?;
    let outputs = write_output(args.output.as_deref(), &to_json(&stats))?;
    let params = json!({"trace": args.trace, "link_rate": args.link_rate, "batch_gap": args.batch_gap});
    Ok(outcome(params, Vec::new(), outputs))
}

#[derive(Debug, Args)]
pub struct SynthTraceArgs {
    /// Video profile: 720p, 1080p or 2160p.
    #[arg(long)]
    profile: String,
    /// Trace length, seconds.
    #[arg(long, default_value_t = 30.0)]
    duration: f64,
    #[arg(long)]
    seed: u64,
    /// Link rate the service-time CV refers to, bits/second.
    #[arg(long, default_value_t = 100e6)]
    link_rate: f64,
    /// Trace CSV output; stdout when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

pub fn synth_trace(args: &SynthTraceArgs) -> Result<Outcome, CliError> {
    let profile = StadiaProfile::by_name(&args.profile)
        .ok_or_else(|| CliError::Usage(format!("unknown profile {:?}; use 720p, 1080p or 2160p", args.profile)))?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let records = traffic::synth_stadia_like(&profile.stats(args.link_rate), args.duration, &mut rng)?;
    let mut buf = Vec::new();
    traffic::write_trace(&records, &mut buf)?;
    let outputs = write_output(args.output.as_deref(), &String::from_utf8(buf).expect("ascii trace"))?;
    let params = json!({"profile": profile, "duration": args.duration, "link_rate": args.link_rate});
    Ok(outcome(params, vec![args.seed], outputs))
}

#[derive(Debug, Args)]
pub struct FiguresArgs {
    /// Figure to reproduce.
    #[arg(long, value_parser = clap::value_parser!(u8).range(2..=5))]
    figure: u8,
    /// Directory receiving one CSV per panel.
    #[arg(long)]
    output_dir: PathBuf,
    /// Grid resolution.
    #[arg(long, default_value_t = 200)]
    points: usize,
}

pub fn figures(args: &FiguresArgs) -> Result<Outcome, CliError> {
    if args.points < 3 {
        return Err(CliError::Usage("--points must be at least 3".into()));
    }
    let outputs = figures::write_figure(args.figure, args.points, &args.output_dir)?;
    let params = json!({
        "figure": args.figure,
        "points": args.points,
        "mu": 1.0,
        "cvs": figures::FIGURE_CVS,
        "fig5_pairs": figures::FIG5_PAIRS,
    });
    Ok(Outcome {
        params,
        seeds: Vec::new(),
        outputs,
        default_manifest: Some(args.output_dir.join(format!("fig{}.manifest.json", args.figure))),
    })
}
