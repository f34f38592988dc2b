// SPDX-License-Identifier: Apache-2.0

//! Acceptance suite. Each test prints one `PASS`/`FAIL` line per criterion
//! and then asserts it.

use llr_core::alloc::{self, AllocationReport};
use llr_core::analytics::{self, LinkLoad, ServiceModel};
use llr_core::sim::{self, FlowSpec, Horizon, SimConfig};
use llr_core::traffic::{self, ArrivalModel, SizeModel, TraceRecord, STADIA_PROFILES};
use llr_core::{StadiaProfile, SweepConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CVS: [f64; 5] = [0.0, 0.5, 1.0, 2.0, 5.0];
const LINK: f64 = 100e6;
const NDS_BITS: f64 = 10_000.0;
const STADIA_SECONDS: f64 = 300.0;
const STADIA_STEP_MBPS: f64 = 2.5;

fn verdict(id: &str, ok: bool, detail: String) {
    println!("{} criterion {id}: {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {id} failed: {detail}");
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn svc(cv: f64) -> ServiceModel {
    ServiceModel::from_rate(1.0, cv).unwrap()
}

#[test]
fn c1a_llr_limit_is_half_capacity_for_exponential_service() {
    let limit = analytics::llr_limit(&svc(1.0));
    verdict("1a", (limit - 0.5).abs() <= 1e-12, format!("lambda_s+ = {limit:.15}"));
}

#[test]
fn c1b_boundary_identities() {
    let mut worst: f64 = 0.0;
    for cv in CVS {
        let s = svc(cv);
        let limit = analytics::llr_limit(&s);
        let kp = analytics::kappa_plus(limit, &s).unwrap();
        let b = analytics::beta(limit, &s).unwrap();
        worst = worst.max(rel(kp * limit, s.mu())).max(rel(b, s.theta().sqrt()));
    }
    verdict("1b", worst < 1e-12, format!("max relative error {worst:.2e}"));
}

#[test]
fn c1c_delay_at_max_allocation_saturates_llr() {
    let mut worst: f64 = 0.0;
    for cv in [0.0, 0.5, 1.0, 2.0, 5.0] {
        let s = svc(cv);
        let limit = analytics::llr_limit(&s);
        for i in 1..=10 {
            let ls = limit * i as f64 / 10.0;
            let bplus = analytics::max_alloc(ls, &s).unwrap();
            let d = analytics::mean_delay(LinkLoad::new(ls, bplus).unwrap(), &s).unwrap();
            worst = worst.max((d * ls - 1.0).abs());
        }
    }
    verdict("1c", worst < 1e-9, format!("50 points, max |D*lambda_s - 1| = {worst:.2e}"));
}

#[test]
fn c1d_gain_derivative() {
    let mut at_star: f64 = 0.0;
    for cv in CVS {
        let s = svc(cv);
        let limit = analytics::llr_limit(&s);
        for i in 1..10 {
            let ls = limit * i as f64 / 10.0;
            let bstar = analytics::pfll_alloc(ls, &s).unwrap();
            if bstar > 0.0 {
                let d = analytics::gain_derivative(LinkLoad::new(ls, bstar).unwrap(), &s).unwrap();
                at_star = at_star.max(d.abs());
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut fd_worst: f64 = 0.0;
    for _ in 0..100 {
        let cv = rng.random_range(0.0..3.0);
        let s = svc(cv);
        let ls = rng.random_range(0.02..0.95) * analytics::llr_limit(&s);
        let bplus = analytics::max_alloc(ls, &s).unwrap();
        let b = rng.random_range(0.05..0.95) * bplus;
        let h = 1e-6;
        let g = |x: f64| analytics::gain(LinkLoad::new(ls, x).unwrap(), &s).unwrap();
        let fd = (g(b + h) - g(b - h)) / (2.0 * h);
        let an = analytics::gain_derivative(LinkLoad::new(ls, b).unwrap(), &s).unwrap();
        fd_worst = fd_worst.max((fd - an).abs() / an.abs().max(1.0));
    }
    verdict(
        "1d",
        at_star < 1e-9 && fd_worst < 1e-6,
        format!("|g'(lambda_b*)| <= {at_star:.2e}; finite-difference error {fd_worst:.2e} over 100 points"),
    );
}

#[test]
fn c2_analytic_f_and_g_share_argmax() {
    let step = 1e-4;
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for cv in [0.0, 0.5, 1.0, 2.0] {
        let s = svc(cv);
        let limit = analytics::llr_limit(&s);
        for i in 1..=20 {
            let ls = limit * i as f64 / 21.0;
            let bplus = analytics::max_alloc(ls, &s).unwrap();
            let bstar = analytics::pfll_alloc(ls, &s).unwrap();
            let delay = analytics::analytic_delay(ls, s);
            let n = (bplus / step).floor() as usize;
            let mut best = (0.0, f64::NEG_INFINITY);
            for k in 0..=n {
                let b = k as f64 * step;
                let f = analytics::f_alt(b, bplus, &delay).unwrap();
                if f > best.1 {
                    best = (b, f);
                }
            }
            worst = worst.max((best.0 - bstar).abs());
            count += 1;
        }
    }
    verdict(
        "2",
        worst <= step,
        format!("{count} (lambda_s, C_S) points, max |argmax f - lambda_b*| = {worst:.2e} (step {step:.0e})"),
    );
}

fn single_flow(lambda: f64, sizes: SizeModel, seed: u64) -> SimConfig {
    SimConfig::new(
        1.0,
        FlowSpec::new(ArrivalModel::poisson(lambda), sizes),
        Horizon::packets(1_000_000),
        seed,
    )
}

#[test]
fn c3_simulator_matches_mg1_formula() {
    let mut lines = Vec::new();
    let mut ok = true;
    for (cv, sizes) in [
        (1.0, SizeModel::Exponential { mean_bits: 1.0 }),
        (0.0, SizeModel::Deterministic { bits: 1.0 }),
    ] {
        for (i, lambda) in [0.3, 0.5, 0.7].into_iter().enumerate() {
            let res = sim::run(&single_flow(lambda, sizes.clone(), 100 + i as u64)).unwrap();
            let got = res.ds.mean_delay().unwrap();
            let want = analytics::mean_delay(LinkLoad::new(lambda, 0.0).unwrap(), &svc(cv)).unwrap();
            let err = rel(got, want);
            ok &= err < 0.02;
            lines.push(format!("cs={cv} lambda={lambda}: {got:.4} vs {want:.4} ({:.2}%)", 100.0 * err));
        }
    }
    verdict("3", ok, lines.join("; "));
}

fn poisson_base(lambda_s: f64, sizes: SizeModel, seed: u64) -> SimConfig {
    SimConfig::new(1.0, FlowSpec::new(ArrivalModel::poisson(lambda_s), sizes.clone()), Horizon::packets(1), seed)
        .with_nds(FlowSpec::new(ArrivalModel::poisson(1.0), sizes))
}

fn poisson_report(lambda_s: f64, sizes: SizeModel, stop: f64, step: f64) -> AllocationReport {
    let base = poisson_base(lambda_s, sizes, 2024);
    let sweep = SweepConfig::with_step(0.0, stop, step).budget(Horizon::packets(2_000_000));
    alloc::empirical_pfll(&base, &sweep).unwrap()
}

#[test]
fn c4_empirical_allocation_recovers_closed_forms() {
    let cases = [
        (0.1, SizeModel::Exponential { mean_bits: 1.0 }, 0.85, 0.025, 0.6, 0.8),
        (0.05, SizeModel::Deterministic { bits: 1.0 }, 0.94, 0.02, 0.793926, 0.924359),
    ];
    let mut ok = true;
    let mut lines = Vec::new();
    for (ls, sizes, stop, step, want_star, want_plus) in cases {
        let r = poisson_report(ls, sizes, stop, step);
        let (e_star, e_plus) = (rel(r.empirical_pfll, want_star), rel(r.empirical_max, want_plus));
        ok &= e_star < 0.05 && e_plus < 0.05;
        lines.push(format!(
            "lambda_s={ls}: pfll {:.4} vs {want_star} ({:.1}%), max {:.4} vs {want_plus} ({:.1}%)",
            r.empirical_pfll,
            100.0 * e_star,
            r.empirical_max,
            100.0 * e_plus
        ));
    }
    verdict("4", ok, lines.join("; "));
}

#[test]
fn c5_strategy_comparison() {
    let c = alloc::compare_strategies(0.05, &svc(0.0)).unwrap();
    let ok = (5.0..=5.8).contains(&c.delay_ratio) && (1.1..=1.25).contains(&c.throughput_ratio);
    verdict(
        "5",
        ok,
        format!("delay_ratio {:.4}, throughput_ratio {:.4}", c.delay_ratio, c.throughput_ratio),
    );
}

fn synth_trace(profile: &StadiaProfile, seed: u64) -> Vec<TraceRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    traffic::synth_stadia_like(&profile.stats(LINK), STADIA_SECONDS, &mut rng).unwrap()
}

fn stadia_base(profile: &StadiaProfile, seed: u64) -> SimConfig {
    let trace = synth_trace(profile, seed);
    let mut cfg = SimConfig::new(LINK, FlowSpec::from_trace(&trace, true), Horizon::time(STADIA_SECONDS), seed)
        .with_nds(FlowSpec::new(ArrivalModel::poisson(1.0), SizeModel::Exponential { mean_bits: NDS_BITS }));
    cfg.batch_gap = traffic::DEFAULT_BATCH_GAP;
    cfg
}

/// NDS sweep in packets/second up to 95% of the capacity left by DS.
fn stadia_sweep(profile: &StadiaProfile) -> SweepConfig {
    let pps = |mbps: f64| mbps * 1e6 / NDS_BITS;
    let stop = 0.95 * (LINK / 1e6 - profile.load_mbps);
    SweepConfig::with_step(0.0, pps(stop), pps(STADIA_STEP_MBPS))
}

fn stadia_report(profile: &StadiaProfile) -> AllocationReport {
    alloc::empirical_pfll(&stadia_base(profile, 11), &stadia_sweep(profile)).unwrap()
}

fn mbps(pps: f64) -> f64 {
    pps * NDS_BITS / 1e6
}

#[test]
fn c6_pfll_exists_for_batch_arrivals() {
    let mut ok = true;
    let mut lines = Vec::new();
    for p in &STADIA_PROFILES {
        let r = stadia_report(p);
        let interior = r.g_curve.has_interior_max();
        let gap = (r.empirical_pfll - r.g_argmax).abs();
        ok &= interior && gap <= r.grid_step;
        lines.push(format!(
            "{}: argmax f {:.1} Mb/s, argmax g {:.1} Mb/s, max {:.1} Mb/s, interior={interior} (reference {} Mb/s)",
            p.name,
            mbps(r.empirical_pfll),
            mbps(r.g_argmax),
            mbps(r.empirical_max),
            p.reference_pfll_mbps
        ));
    }
    verdict("6", ok, lines.join("; "));
}

#[test]
fn c7_percentile_ordering() {
    let p = StadiaProfile::by_name("1080p").unwrap();
    let base = stadia_base(p, 11);
    let r = alloc::empirical_pfll(&base, &stadia_sweep(p)).unwrap();
    let rows = alloc::percentile_impact(&base, &[0.0, r.empirical_pfll, r.empirical_max], None).unwrap();
    let (p0, pstar, pplus) = (rows[0].p90, rows[1].p90, rows[2].p90);
    let ok = pplus > pstar && pstar > p0 && pstar / p0 < pplus / p0;
    verdict(
        "7",
        ok,
        format!(
            "p90 at 0 / pfll / max = {:.1} / {:.1} / {:.1} us; factors {:.2}x and {:.2}x (reference 1.7x and 4.9x)",
            p0 * 1e6,
            pstar * 1e6,
            pplus * 1e6,
            pstar / p0,
            pplus / p0
        ),
    );
}

#[test]
fn c8_trace_statistics_round_trip() {
    let mut ok = true;
    let mut lines = Vec::new();
    for (i, p) in STADIA_PROFILES.iter().enumerate() {
        let trace = synth_trace(p, 500 + i as u64);
        let s = traffic::trace_stats(&trace, LINK, traffic::DEFAULT_BATCH_GAP).unwrap();
        let want = p.stats(LINK);
        let errs = [
            rel(s.load, want.load),
            rel(s.mean_iat, want.mean_iat),
            rel(s.mean_size_bytes, want.mean_size_bytes),
            rel(s.mean_batch_size, want.mean_batch_size),
        ];
        let worst = errs.iter().copied().fold(0.0, f64::max);
        ok &= worst < 0.05;
        lines.push(format!(
            "{}: load {:.2} Mb/s, E[tau] {:.3} ms, E[L] {:.1} B, E[sigma] {:.2} (worst {:.2}%)",
            p.name,
            s.load / 1e6,
            s.mean_iat * 1e3,
            s.mean_size_bytes,
            s.mean_batch_size,
            100.0 * worst
        ));
    }
    verdict("8", ok, lines.join("; "));
}

fn run_bytes(cfg: &SimConfig) -> Vec<u8> {
    let res = sim::run(cfg).unwrap();
    let mut out = serde_json::to_vec(&res.ds).unwrap();
    out.extend(serde_json::to_vec(&res.nds).unwrap());
    sim::write_packets_csv(&res, &mut out).unwrap();
    out
}

#[test]
fn c9_seeded_runs_are_byte_identical() {
    let mut mm1 = single_flow(0.5, SizeModel::Exponential { mean_bits: 1.0 }, 9);
    mm1.horizon = Horizon::packets(50_000);
    mm1.record_packets = true;

    let p = StadiaProfile::by_name("720p").unwrap();
    let mut stadia = stadia_base(p, 3);
    stadia.horizon = Horizon::time(5.0);
    stadia.nds.as_mut().unwrap().arrivals = ArrivalModel::poisson(3000.0);
    stadia.record_packets = true;

    let sims_ok = run_bytes(&mm1) == run_bytes(&mm1) && run_bytes(&stadia) == run_bytes(&stadia);

    let trace_bytes = |seed| {
        let mut out = Vec::new();
        traffic::write_trace(&synth_trace(p, seed), &mut out).unwrap();
        out
    };
    let traces_ok = trace_bytes(4) == trace_bytes(4);

    let base = poisson_base(0.1, SizeModel::Exponential { mean_bits: 1.0 }, 5);
    let sweep = SweepConfig::with_step(0.0, 0.88, 0.04).budget(Horizon::packets(50_000));
    let report = || serde_json::to_vec(&alloc::empirical_pfll(&base, &sweep).unwrap()).unwrap();
    let sweep_ok = report() == report();

    verdict(
        "9",
        sims_ok && traces_ok && sweep_ok,
        format!("simulations {sims_ok}, synthetic traces {traces_ok}, sweep reports {sweep_ok}"),
    );
}
