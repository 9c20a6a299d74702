mod common;

use common::{load_case, two_bus};
use voltplace::netmodel::Network;
use voltplace::sampling::{
    draw_samples, range_from_fractions, InjectionRange, RangeOverride, RangeTarget, SampleError, SampleOptions,
    SampleSet,
};

fn case10() -> Network {
    load_case("case10ba.m").scaled_injections(0.6)
}

#[test]
fn sign_aware_fractions() {
    let net = two_bus(0.1, 0.1, -1.0, 0.0);
    let r = range_from_fractions(&net, 0.5, 1.5, &[]).unwrap();
    assert_eq!((r.p_min[0], r.p_max[0]), (-1.5, -0.5));
    assert_eq!((r.q_min[0], r.q_max[0]), (0.0, 0.0));
}

#[test]
fn pv_overrides_allow_export() {
    let net = load_case("case33bw.m");
    let ov: Vec<RangeOverride> = [18, 33]
        .iter()
        .map(|&bus| RangeOverride { bus, lo: -2.0, hi: 1.5, target: RangeTarget::Active })
        .collect();
    let r = range_from_fractions(&net, 0.5, 1.5, &ov).unwrap();
    for bus in [18, 33] {
        let k = net.pq_ids().iter().position(|&b| b == bus).unwrap();
        let p = net.buses[net.index_of(bus).unwrap()].p_nom;
        assert!(r.p_max[k] > 0.0);
        assert!((r.p_max[k] - (-2.0 * p)).abs() < 1e-15 && (r.p_min[k] - 1.5 * p).abs() < 1e-15);
        // Reactive range untouched.
        assert!((r.q_min[k] - 1.5 * net.buses[net.index_of(bus).unwrap()].q_nom).abs() < 1e-15);
    }
    let bad = [RangeOverride { bus: 99, lo: 0.0, hi: 1.0, target: RangeTarget::Both }];
    assert!(matches!(range_from_fractions(&net, 0.5, 1.5, &bad), Err(SampleError::UnknownBus(99))));
}

#[test]
fn degenerate_box_returns_nominal() {
    let net = case10();
    let r = range_from_fractions(&net, 1.0, 1.0, &[]).unwrap();
    let s = draw_samples(&net, &r, 1, 3, &SampleOptions::default(), "nominal").unwrap();
    assert_eq!(s.len(), 1);
    let pq = net.pq_indices();
    for (k, &i) in pq.iter().enumerate() {
        assert_eq!(s.injections[0].p[k], net.buses[i].p_nom);
        assert_eq!(s.injections[0].q[k], net.buses[i].q_nom);
    }
}

fn in_box(r: &InjectionRange, s: &SampleSet) -> bool {
    s.injections.iter().all(|i| r.contains(i))
}

#[test]
fn seeded_and_worker_independent() {
    let net = load_case("case33bw.m");
    let r = range_from_fractions(&net, 0.5, 1.5, &[]).unwrap();
    let opts = SampleOptions::default();
    let a = draw_samples(&net, &r, 300, 42, &opts, "c").unwrap();
    let b = draw_samples(&net, &r, 300, 42, &opts, "c").unwrap();
    assert_eq!(a, b);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let c = pool.install(|| draw_samples(&net, &r, 300, 42, &opts, "c").unwrap());
    assert_eq!(a, c);
    let d = draw_samples(&net, &r, 300, 43, &opts, "c").unwrap();
    assert_ne!(a.injections, d.injections);
    assert!(in_box(&r, &a) && in_box(&r, &d));
    // Prefix property: the first k draws do not depend on n.
    let e = draw_samples(&net, &r, 10, 42, &opts, "c").unwrap();
    assert_eq!(e.injections[..], a.injections[..10]);
}

#[test]
fn csv_round_trip() {
    let net = case10();
    let r = range_from_fractions(&net, 0.5, 1.5, &[]).unwrap();
    let opts = SampleOptions::default();
    let s = draw_samples(&net, &r, 50, 8, &opts, "nominal").unwrap();
    let mut buf = Vec::new();
    s.write_csv(&mut buf).unwrap();
    let meta = s.meta(&r, &opts);
    let back = SampleSet::read_csv(buf.as_slice(), &meta).unwrap();
    assert_eq!(back, s);
    let js = serde_json::to_string(&meta).unwrap();
    assert_eq!(serde_json::from_str::<voltplace::sampling::SampleMeta>(&js).unwrap(), meta);
}

#[test]
fn non_convergence_is_fatal() {
    let net = two_bus(0.1, 0.1, -1.0, -1.0);
    let r = InjectionRange { p_min: vec![-4.0], p_max: vec![-0.1], q_min: vec![-4.0], q_max: vec![-0.1] };
    match draw_samples(&net, &r, 40, 1, &SampleOptions::default(), "x") {
        Err(SampleError::NonConvergence { indices }) => {
            assert!(!indices.is_empty() && indices.len() < 40);
            assert!(indices.windows(2).all(|w| w[0] < w[1]));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn case10ba_violations_always_worst_at_bus_10() {
    let net = case10();
    let r = range_from_fractions(&net, 0.5, 1.5, &[]).unwrap();
    let s = draw_samples(&net, &r, 5000, 11, &SampleOptions::default(), "nominal").unwrap();
    let mut violating = 0;
    for sol in &s.solutions {
        let (k, v) = sol.v.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap();
        if *v < 0.9 {
            violating += 1;
            assert_eq!(s.bus_ids[k], 10);
        }
    }
    assert!(violating > 500, "{violating}");
}
