// SPDX-License-Identifier: Apache-2.0

use llr_core::alloc;
use llr_core::analytics::{self, LinkLoad, ServiceModel};
use llr_core::curve::{analytic_f_curve, analytic_g_curve, normalize_curve};
use llr_core::sim::{self, FlowSpec, Horizon, SimConfig};
use llr_core::traffic::{self, ArrivalModel, ArrivalProcess, SizeModel, TraceRecord};
use llr_core::StadiaProfile;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn svc(cv: f64) -> ServiceModel {
    ServiceModel::from_rate(1.0, cv).unwrap()
}

/// `(lambda_s, cv)` strictly inside the LLR.
fn inside_llr() -> impl Strategy<Value = (f64, f64)> {
    (0.0..4.0f64, 0.01..0.99f64).prop_map(|(cv, frac)| (frac * analytics::llr_limit(&svc(cv)), cv))
}

proptest! {
    #[test]
    fn pfll_lies_between_zero_and_max((ls, cv) in inside_llr()) {
        let s = svc(cv);
        let bplus = analytics::max_alloc(ls, &s).unwrap();
        let bstar = analytics::pfll_alloc(ls, &s).unwrap();
        prop_assert!(0.0 <= bstar && bstar <= bplus + 1e-12);
        let kp = analytics::kappa_plus(ls, &s).unwrap();
        let ks = analytics::kappa_star(ls, &s).unwrap();
        prop_assert!(ks >= kp - 1e-12);
    }

    #[test]
    fn gain_is_concave_on_the_allocation_range((ls, cv) in inside_llr(), u in 0.01..0.98f64) {
        let s = svc(cv);
        let bplus = analytics::max_alloc(ls, &s).unwrap();
        let h = 1e-3 * bplus;
        let b = u * bplus + h;
        let g = |x: f64| analytics::gain(LinkLoad::new(ls, x).unwrap(), &s).unwrap();
        prop_assert!(g(b - h) + g(b + h) - 2.0 * g(b) <= 1e-12);
    }

    #[test]
    fn delay_loss_matches_its_definition((ls, cv) in inside_llr(), u in 0.0..1.0f64) {
        let s = svc(cv);
        let b = u * analytics::max_alloc(ls, &s).unwrap();
        let d = |x: f64| analytics::mean_delay(LinkLoad::new(ls, x).unwrap(), &s).unwrap();
        let want = (d(b) - d(0.0)) / d(0.0);
        let got = analytics::delay_loss(LinkLoad::new(ls, b).unwrap(), &s).unwrap();
        prop_assert!((got - want).abs() <= 1e-9 * want.abs().max(1.0));
    }

    #[test]
    fn allocations_shrink_as_service_grows_more_variable(frac in 0.05..0.95f64, cv in 0.0..3.0f64, dcv in 0.05..1.0f64) {
        let (lo, hi) = (svc(cv), svc(cv + dcv));
        prop_assert!(analytics::llr_limit(&hi) < analytics::llr_limit(&lo));
        let ls = frac * analytics::llr_limit(&hi);
        prop_assert!(analytics::max_alloc(ls, &hi).unwrap() <= analytics::max_alloc(ls, &lo).unwrap());
        prop_assert!(analytics::pfll_alloc(ls, &hi).unwrap() <= analytics::pfll_alloc(ls, &lo).unwrap());
    }

    #[test]
    fn mean_delay_grows_with_load(cv in 0.0..4.0f64, a in 0.0..0.9f64, da in 0.001..0.09f64) {
        let s = svc(cv);
        let d = |x: f64| analytics::mean_delay(LinkLoad::new(x, 0.0).unwrap(), &s).unwrap();
        prop_assert!(d(a + da) > d(a));
    }
}

#[test]
fn normalized_f_and_g_curves_coincide() {
    for cv in [0.0, 0.5, 1.0, 2.0] {
        let s = svc(cv);
        for frac in [0.1, 0.4, 0.7, 0.95] {
            let ls = frac * analytics::llr_limit(&s);
            let g = normalize_curve(&analytic_g_curve(ls, &s, 401).unwrap()).unwrap();
            let f = normalize_curve(&analytic_f_curve(ls, &s, 401).unwrap()).unwrap();
            let worst = g.values.iter().zip(&f.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(worst < 1e-9, "cv={cv} ls={ls}: {worst}");
            assert_eq!(g.argmax_index, f.argmax_index);
        }
    }
}

#[test]
fn strategy_ratios_are_at_least_one() {
    for cv in [0.0, 1.0, 2.0] {
        let s = svc(cv);
        for frac in [0.05, 0.3, 0.6, 0.9] {
            let c = alloc::compare_strategies(frac * analytics::llr_limit(&s), &s).unwrap();
            assert!(c.delay_ratio >= 1.0 && c.throughput_ratio >= 1.0, "{c:?}");
        }
    }
}

fn arrivals(model: ArrivalModel, seed: u64, n: usize) -> Vec<(f64, u32)> {
    let mut p = ArrivalProcess::new(model).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map_while(|_| p.next_arrival(&mut rng).map(|a| (a.time, a.count)))
        .collect()
}

#[test]
fn generators_are_deterministic_per_seed() {
    let model = ArrivalModel::poisson(3.0);
    assert_eq!(arrivals(model.clone(), 1, 1000), arrivals(model.clone(), 1, 1000));
    assert_ne!(arrivals(model.clone(), 1, 1000), arrivals(model, 2, 1000));

    let p = StadiaProfile::by_name("2160p").unwrap();
    let synth = |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        traffic::synth_stadia_like(&p.stats(100e6), 2.0, &mut rng).unwrap()
    };
    assert_eq!(synth(5), synth(5));
    assert_ne!(synth(5), synth(6));
}

#[test]
fn trace_file_round_trip() {
    let p = StadiaProfile::by_name("720p").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let trace = traffic::synth_stadia_like(&p.stats(100e6), 5.0, &mut rng).unwrap();
    let mut buf = Vec::new();
    traffic::write_trace(&trace, &mut buf).unwrap();
    let back = traffic::load_trace(buf.as_slice()).unwrap();
    assert_eq!(back.len(), trace.len());
    for (a, b) in trace.iter().zip(&back) {
        assert!((a.timestamp - b.timestamp).abs() < 1e-9);
        assert_eq!(a.size_bits, b.size_bits);
    }
}

/// A looped trace restarts one first-timestamp after its last packet.
#[test]
fn looped_trace_keeps_its_rate() {
    let trace: Vec<TraceRecord> = (0..10).map(|i| TraceRecord::new(0.002 + 0.002 * i as f64, 100)).collect();
    let times: Vec<f64> = arrivals(ArrivalModel::trace(trace.clone(), true), 0, 100)
        .into_iter()
        .map(|(t, _)| t)
        .collect();
    assert_eq!(times.len(), 100);
    for w in times.windows(2) {
        assert!((w[1] - w[0] - 0.002).abs() < 1e-12, "{w:?}");
    }
    assert_eq!(arrivals(ArrivalModel::trace(trace, false), 0, 100).len(), 10);
}

#[test]
fn batch_gap_counts_batches_not_packets() {
    // Three packets every 10 ms, 1 us apart.
    let trace: Vec<TraceRecord> = (0..300)
        .map(|i| TraceRecord::new(0.01 * (i / 3) as f64 + 1e-6 * (i % 3) as f64, 100))
        .collect();
    let mut cfg = SimConfig::new(1e9, FlowSpec::from_trace(&trace, false), Horizon::time(10.0), 0);
    let per_packet = sim::run(&cfg).unwrap();
    cfg.batch_gap = 1e-4;
    let per_batch = sim::run(&cfg).unwrap();
    assert_eq!(per_packet.ds.batches, 300);
    assert_eq!(per_batch.ds.batches, 100);
    assert!((per_batch.ds.mean_batch_interarrival().unwrap() - 0.01).abs() < 1e-12);
    assert_eq!(per_packet.ds.delays, per_batch.ds.delays);
}

#[test]
fn unstable_link_aborts() {
    let mut cfg = SimConfig::new(
        1.0,
        FlowSpec::new(ArrivalModel::poisson(1.2), SizeModel::Exponential { mean_bits: 1.0 }),
        Horizon::packets(1_000_000),
        3,
    );
    cfg.max_queue = 1000;
    let err = sim::run(&cfg).unwrap_err();
    assert!(err.to_string().contains("unstable"), "{err}");
}
