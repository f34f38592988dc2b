// SPDX-License-Identifier: Apache-2.0

//! Max and proportional-fair NDS rate allocation, from closed forms and from
//! simulation sweeps over the NDS rate.
//!
//! A sweep runs one simulation per grid NDS rate. The DS flow uses the same
//! random streams at every point (common random numbers) while the NDS flow
//! gets a per-point stream. From the measured DS delays the sweep finds the
//! largest NDS rate that keeps the DS delay under the measured DS
//! inter-arrival time (between batch starts for batched traffic, see
//! [`SimConfig::batch_gap`]), then maximizes `f̂ = λb (D̂(λb⁺) − D̂(λb))` with a
//! parabolic refinement around the best grid point.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::{self, LinkLoad, ServiceModel};
use crate::curve::{normalize_curve, GainCurve};
use crate::error::{Error, Result};
use crate::sim::{self, Flow, Horizon, SimConfig, SimResult};
use crate::traffic::{ArrivalModel, SizeModel};

/// Batch count for the batch-means standard error of mean delays.
const SE_BATCHES: usize = 32;
const MIN_GRID_POINTS: usize = 5;

/// NDS-rate grid and per-point simulation budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub start: f64,
    pub stop: f64,
    /// Grid spacing; alternatively give `points`.
    pub step: Option<f64>,
    pub points: Option<usize>,
    /// Overrides the base configuration's horizon at every point.
    pub budget: Option<Horizon>,
    #[serde(default = "default_true")]
    pub parallel: bool,
}

fn default_true() -> bool {
    true
}

impl SweepConfig {
    pub fn with_step(start: f64, stop: f64, step: f64) -> Self {
        Self {
            start,
            stop,
            step: Some(step),
            points: None,
            budget: None,
            parallel: true,
        }
    }

    pub fn with_points(start: f64, stop: f64, points: usize) -> Self {
        Self {
            start,
            stop,
            step: None,
            points: Some(points),
            budget: None,
            parallel: true,
        }
    }

    pub fn budget(mut self, horizon: Horizon) -> Self {
        self.budget = Some(horizon);
        self
    }

    /// Grid NDS rates, `start` to `stop` inclusive.
    pub fn grid(&self) -> Result<Vec<f64>> {
        if !(self.start.is_finite() && self.start >= 0.0 && self.stop > self.start) {
            return Err(Error::InvalidArgument(format!(
                "sweep needs 0 <= start < stop, got [{}, {}]",
                self.start, self.stop
            )));
        }
        let grid = match (self.step, self.points) {
            (Some(step), _) => {
                if !(step > 0.0 && step.is_finite()) {
                    return Err(Error::InvalidArgument(format!("sweep step must be positive, got {step}")));
                }
                let n = ((self.stop - self.start) / step + 1e-9).floor() as usize + 1;
                (0..n).map(|i| self.start + i as f64 * step).collect::<Vec<_>>()
            }
            (None, Some(points)) => crate::curve::uniform_grid(self.start, self.stop, points),
            (None, None) => {
                return Err(Error::InvalidArgument("sweep needs a step or a point count".into()))
            }
        };
        if grid.len() < MIN_GRID_POINTS {
            return Err(Error::InvalidArgument(format!(
                "sweep grid has {} points, at least {MIN_GRID_POINTS} are required",
                grid.len()
            )));
        }
        Ok(grid)
    }
}

/// DS measurements at one grid NDS rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub lambda_b: f64,
    pub mean_delay: f64,
    pub delay_std_error: f64,
    /// Measured mean gap between DS batch starts; the LLR threshold. Equals
    /// the packet inter-arrival time when the batch gap is zero.
    pub ds_interarrival: f64,
    /// Measured mean gap between DS packets.
    pub ds_packet_interarrival: f64,
    /// Measured DS packet rate, the reciprocal of `ds_packet_interarrival`.
    pub ds_rate: f64,
    /// Delivered NDS packets per second.
    pub nds_throughput: f64,
    /// Delivered DS bits per second.
    pub ds_bit_rate: f64,
    /// Delivered NDS bits per second.
    pub nds_bit_rate: f64,
    pub ds_samples: usize,
    pub p50: f64,
    pub p90: f64,
    pub p99: f64,
}

/// Configuration of grid point `index` at NDS rate `lambda_b`.
fn point_config(base: &SimConfig, lambda_b: f64, index: usize, budget: Option<Horizon>) -> Result<SimConfig> {
    let mut cfg = base.clone();
    cfg.nds_stream = 1 + index as u64;
    if let Some(h) = budget {
        cfg.horizon = h;
    }
    if lambda_b > 0.0 {
        let template = base.nds.clone().ok_or_else(|| {
            Error::InvalidArgument("an NDS flow template is required to sweep the NDS rate".into())
        })?;
        let mut nds = template;
        nds.arrivals = ArrivalModel::poisson(lambda_b);
        cfg.nds = Some(nds);
    } else {
        cfg.nds = None;
    }
    Ok(cfg)
}

fn measure(lambda_b: f64, result: &SimResult) -> Result<SweepPoint> {
    let ds = &result.ds;
    let mean_delay = ds.mean_delay().ok_or(Error::EmptyResult("ds"))?;
    let ds_interarrival = ds.mean_batch_interarrival().ok_or(Error::EmptyResult("ds"))?;
    let ds_packet_interarrival = ds.mean_interarrival().ok_or(Error::EmptyResult("ds"))?;
    let sorted = ds.sorted_delays();
    let pct = |p| sim::nearest_rank(&sorted, p).unwrap_or(f64::NAN);
    Ok(SweepPoint {
        lambda_b,
        mean_delay,
        delay_std_error: ds.mean_delay_std_error(SE_BATCHES).unwrap_or(0.0),
        ds_interarrival,
        ds_packet_interarrival,
        ds_rate: 1.0 / ds_packet_interarrival,
        nds_throughput: result.nds.delivered as f64 / result.duration,
        ds_bit_rate: result.throughput(Flow::Ds),
        nds_bit_rate: result.throughput(Flow::Nds),
        ds_samples: ds.delays.len(),
        p50: pct(0.5),
        p90: pct(0.9),
        p99: pct(0.99),
    })
}

fn run_points(base: &SimConfig, rates: &[f64], budget: Option<Horizon>, parallel: bool) -> Result<Vec<SweepPoint>> {
    let one = |(i, &lb): (usize, &f64)| -> Result<SweepPoint> {
        let cfg = point_config(base, lb, i, budget)?;
        let res = sim::run(&cfg)?;
        measure(lb, &res)
    };
    if parallel {
        rates.par_iter().enumerate().map(one).collect()
    } else {
        rates.iter().enumerate().map(one).collect()
    }
}

/// Simulates every grid point of `sweep`.
pub fn run_sweep(base: &SimConfig, sweep: &SweepConfig) -> Result<Vec<SweepPoint>> {
    let grid = sweep.grid()?;
    run_points(base, &grid, sweep.budget, sweep.parallel)
}

/// Empirical max allocation found on a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaxEstimate {
    pub lambda_b_plus: f64,
    /// Interpolated DS mean delay at `lambda_b_plus`.
    pub delay_at_max: f64,
    /// Index of the last grid point inside the region.
    pub last_inside: usize,
}

fn lerp(x0: f64, y0: f64, x1: f64, y1: f64, x: f64) -> f64 {
    if x1 == x0 {
        y0
    } else {
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }
}

/// Locates the first grid crossing of the measured condition
/// `D̂s(λb) <= 1/λ̂s` and interpolates between the bracketing points.
pub fn estimate_max(points: &[SweepPoint]) -> Result<MaxEstimate> {
    let first = points.first().ok_or_else(|| Error::InvalidArgument("empty sweep".into()))?;
    let excess = |p: &SweepPoint| p.mean_delay - p.ds_interarrival;

    if excess(first) > 0.0 {
        if excess(first) <= 2.0 * first.delay_std_error {
            return Ok(MaxEstimate {
                lambda_b_plus: first.lambda_b,
                delay_at_max: first.mean_delay,
                last_inside: 0,
            });
        }
        return Err(Error::DsOutsideLlr {
            delay: first.mean_delay,
            inter_arrival: first.ds_interarrival,
        });
    }

    let crossing = points
        .iter()
        .position(|p| excess(p) > 0.0)
        .ok_or(Error::GridTooShort {
            stop: points[points.len() - 1].lambda_b,
        })?;
    let (a, b) = (&points[crossing - 1], &points[crossing]);
    let (ea, eb) = (excess(a), excess(b));
    let lambda_b_plus = a.lambda_b + (b.lambda_b - a.lambda_b) * (-ea) / (eb - ea);
    Ok(MaxEstimate {
        lambda_b_plus,
        delay_at_max: lerp(a.lambda_b, a.mean_delay, b.lambda_b, b.mean_delay, lambda_b_plus),
        last_inside: crossing - 1,
    })
}

/// Largest NDS rate keeping the measured DS delay within the measured DS
/// inter-arrival time.
pub fn empirical_max_alloc(base: &SimConfig, sweep: &SweepConfig) -> Result<f64> {
    let points = run_sweep(base, sweep)?;
    Ok(estimate_max(&points)?.lambda_b_plus)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationReport {
    /// Measured DS arrival rate without NDS traffic.
    pub lambda_s: f64,
    pub analytic_max: Option<f64>,
    pub analytic_pfll: Option<f64>,
    pub empirical_max: f64,
    /// Refined argmax of f̂.
    pub empirical_pfll: f64,
    /// Refined argmax of ĝ.
    pub g_argmax: f64,
    pub g_curve: GainCurve,
    pub f_curve: GainCurve,
    pub g_hat: Option<GainCurve>,
    pub f_hat: Option<GainCurve>,
    /// Measured DS delay along the curve grid.
    pub curve_delays: Vec<f64>,
    pub delay_at_zero: f64,
    pub delay_at_pfll: f64,
    pub delay_at_max: f64,
    pub grid_step: f64,
    /// Two standard errors of the DS mean delay, worst grid point.
    pub delay_noise_tolerance: f64,
    /// Noise tolerance carried over to f̂ values.
    pub f_noise_tolerance: f64,
    pub points: Vec<SweepPoint>,
    pub warnings: Vec<String>,
    pub notes: Vec<String>,
}

/// Closed-form service model when both flows are Poisson with one shared
/// exponential or deterministic size distribution.
fn analytic_service(base: &SimConfig) -> Option<(f64, ServiceModel)> {
    let ArrivalModel::Poisson { rate } = base.ds.arrivals else {
        return None;
    };
    let nds = base.nds.as_ref()?;
    let cv = match (&base.ds.sizes, &nds.sizes) {
        (SizeModel::Exponential { mean_bits: a }, SizeModel::Exponential { mean_bits: b }) if a == b => 1.0,
        (SizeModel::Deterministic { bits: a }, SizeModel::Deterministic { bits: b }) if a == b => 0.0,
        _ => return None,
    };
    let svc = ServiceModel::from_link(base.link_rate, base.ds.sizes.mean_bits(), cv).ok()?;
    Some((rate, svc))
}

/// Runs the sweep and estimates both allocations from measured delays.
pub fn empirical_pfll(base: &SimConfig, sweep: &SweepConfig) -> Result<AllocationReport> {
    let grid = sweep.grid()?;
    let points = run_points(base, &grid, sweep.budget, sweep.parallel)?;
    let mut report = report_from_points(points, grid[1] - grid[0])?;
    if let Some((lambda_s, svc)) = analytic_service(base) {
        report.analytic_max = analytics::max_alloc(lambda_s, &svc).ok();
        report.analytic_pfll = analytics::pfll_alloc(lambda_s, &svc).ok();
    }
    Ok(report)
}

/// Builds the allocation report from already-simulated sweep points.
pub fn report_from_points(points: Vec<SweepPoint>, grid_step: f64) -> Result<AllocationReport> {
    let max = estimate_max(&points)?;
    let zero = &points[0];
    let d0 = zero.mean_delay;

    // Curve support: grid points strictly below λb⁺, then λb⁺ itself.
    let inside = &points[..=max.last_inside];
    let mut xs: Vec<f64> = inside
        .iter()
        .map(|p| p.lambda_b)
        .filter(|&b| b < max.lambda_b_plus)
        .collect();
    let mut delays: Vec<f64> = inside.iter().take(xs.len()).map(|p| p.mean_delay).collect();
    // Throughput gain as a ratio of delivered bit rates; it equals the packet
    // rate ratio when both flows share one size distribution.
    let g_at = |p: &SweepPoint| p.nds_bit_rate / p.ds_bit_rate - (p.mean_delay - d0) / d0;
    let mut g: Vec<f64> = inside.iter().take(xs.len()).map(g_at).collect();
    let mut f: Vec<f64> = xs
        .iter()
        .zip(&delays)
        .map(|(&b, &d)| b * (max.delay_at_max - d))
        .collect();

    let next = points.get(max.last_inside + 1);
    let g_end = match next {
        Some(n) => {
            let a = &points[max.last_inside];
            lerp(a.lambda_b, g_at(a), n.lambda_b, g_at(n), max.lambda_b_plus)
        }
        None => g_at(&points[max.last_inside]),
    };
    xs.push(max.lambda_b_plus);
    delays.push(max.delay_at_max);
    g.push(g_end);
    f.push(0.0);

    let mut warnings = Vec::new();
    if xs.len() < 3 {
        warnings.push(format!(
            "only {} curve points below the max allocation; refine the grid",
            xs.len()
        ));
    }

    let g_curve = GainCurve::new(xs.clone(), g)?;
    let f_curve = GainCurve::new(xs.clone(), f)?;

    let worst_se = points[..=max.last_inside]
        .iter()
        .map(|p| p.delay_std_error)
        .fold(0.0, f64::max);
    let delay_noise_tolerance = 2.0 * worst_se;
    let f_noise_tolerance = inside
        .iter()
        .map(|p| 2.0 * p.lambda_b * p.delay_std_error)
        .fold(0.0, f64::max);

    if f_curve.trend_changes(f_noise_tolerance) > 1 {
        warnings.push("f-hat is not unimodal beyond the noise tolerance".into());
    }

    let empirical_pfll = f_curve.argmax_rate.min(max.lambda_b_plus);
    let delay_at_pfll = interpolate(&xs, &delays, empirical_pfll);

    let g_hat = normalize_curve(&g_curve).ok();
    let f_hat = normalize_curve(&f_curve).ok();
    if f_hat.is_none() {
        warnings.push("f-hat has no positive value; the DS flow sits on the region boundary".into());
    }

    Ok(AllocationReport {
        lambda_s: zero.ds_rate,
        analytic_max: None,
        analytic_pfll: None,
        empirical_max: max.lambda_b_plus,
        empirical_pfll,
        g_argmax: g_curve.argmax_rate,
        g_curve,
        f_curve,
        g_hat,
        f_hat,
        curve_delays: delays,
        delay_at_zero: d0,
        delay_at_pfll,
        delay_at_max: max.delay_at_max,
        grid_step,
        delay_noise_tolerance,
        f_noise_tolerance,
        points,
        warnings,
        notes: Vec::new(),
    })
}

fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let i = xs.partition_point(|&v| v < x);
    if i == 0 {
        ys[0]
    } else if i >= xs.len() {
        ys[ys.len() - 1]
    } else {
        lerp(xs[i - 1], ys[i - 1], xs[i], ys[i], x)
    }
}

impl AllocationReport {
    /// Plot-ready `lambda_b,g_hat,f_hat,mean_delay_s` rows.
    pub fn curves_csv(&self) -> String {
        let mut out = String::from("lambda_b,g_hat,f_hat,mean_delay_s\n");
        let fmt = |c: &Option<GainCurve>, i: usize| {
            c.as_ref().map_or_else(String::new, |c| format!("{:.9}", c.values[i]))
        };
        for (i, x) in self.g_curve.lambda_b_grid.iter().enumerate() {
            out.push_str(&format!(
                "{:.9},{},{},{:.9}\n",
                x,
                fmt(&self.g_hat, i),
                fmt(&self.f_hat, i),
                self.curve_delays[i]
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategyComparison {
    /// `E[D(λb⁺)] / E[D(λb*)]`.
    pub delay_ratio: f64,
    /// `λb⁺ / λb*`.
    pub throughput_ratio: f64,
}

/// How much delay the PFLL allocation saves and how much NDS throughput it
/// gives up relative to the max allocation.
pub fn compare_strategies(lambda_s: f64, svc: &ServiceModel) -> Result<StrategyComparison> {
    let bplus = analytics::max_alloc(lambda_s, svc)?;
    let bstar = analytics::pfll_alloc(lambda_s, svc)?;
    if !(bstar > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "PFLL allocation is zero at lambda_s={lambda_s}; ratios are undefined"
        )));
    }
    let d_max = analytics::mean_delay(LinkLoad::new(lambda_s, bplus)?, svc)?;
    let d_star = analytics::mean_delay(LinkLoad::new(lambda_s, bstar)?, svc)?;
    Ok(StrategyComparison {
        delay_ratio: d_max / d_star,
        throughput_ratio: bplus / bstar,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PercentileRow {
    pub lambda_b: f64,
    pub p50: f64,
    pub p90: f64,
    pub p99: f64,
}

/// DS delay percentiles at each NDS rate, with the sweep's seeding policy.
pub fn percentile_impact(
    base: &SimConfig,
    lambda_b_points: &[f64],
    budget: Option<Horizon>,
) -> Result<Vec<PercentileRow>> {
    if lambda_b_points.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
        return Err(Error::InvalidArgument("NDS rates must be non-negative".into()));
    }
    let points = run_points(base, lambda_b_points, budget, true)?;
    Ok(points
        .into_iter()
        .map(|p| PercentileRow {
            lambda_b: p.lambda_b,
            p50: p.p50,
            p90: p.p90,
            p99: p.p99,
        })
        .collect())
}

/// Convenience: DS-only delay percentiles of a finished run.
pub fn ds_percentiles(result: &SimResult) -> Result<(f64, f64, f64)> {
    Ok((
        sim::delay_percentile(result, Flow::Ds, 0.5)?,
        sim::delay_percentile(result, Flow::Ds, 0.9)?,
        sim::delay_percentile(result, Flow::Ds, 0.99)?,
    ))
}
