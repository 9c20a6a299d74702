mod common;

use common::{load_case, two_bus, two_bus_voltage};
use voltplace::netmodel::Network;
use voltplace::powerflow::{
    solve_pf, solve_pf_voltvar, InjectionVector, PfModel, PfOptions, VoltVarCurve,
};
use voltplace::sampling::{draw_injection, range_from_fractions};

/// Mismatch recomputed from the dense admittance matrix and complex power.
fn dense_mismatch(net: &Network, inj: &InjectionVector, v: &[f64], th: &[f64]) -> f64 {
    let y = voltplace::netmodel::build_admittance(net);
    let n = v.len();
    let e: Vec<num_complex::Complex64> = (0..n).map(|i| num_complex::Complex64::from_polar(v[i], th[i])).collect();
    let mut worst: f64 = 0.0;
    for (k, &i) in net.pq_indices().iter().enumerate() {
        let cur: num_complex::Complex64 = (0..n).map(|j| y[i][j] * e[j]).sum();
        let s = e[i] * cur.conj();
        worst = worst.max((inj.p[k] - s.re).abs()).max((inj.q[k] - s.im).abs());
    }
    worst
}

#[test]
fn zero_injection_gives_flat_profile() {
    let net = load_case("case33bw.m");
    let inj = InjectionVector::zeros(32);
    let sol = solve_pf(&net, &inj, 1e-8, 30).unwrap();
    assert!(sol.converged);
    assert_eq!(sol.iterations, 0);
    assert!(sol.v.iter().all(|&v| v == 1.0));
    assert!(sol.theta.iter().all(|&t| t == 0.0));
}

#[test]
fn two_bus_matches_closed_form() {
    let net = two_bus(0.1, 0.1, -0.1, -0.05);
    let inj = InjectionVector { p: vec![-0.1], q: vec![-0.05] };
    let sol = solve_pf(&net, &inj, 1e-12, 30).unwrap();
    assert!(sol.converged);
    let want = two_bus_voltage(0.1, 0.1, 0.1, 0.05);
    assert!((sol.v[1] - want).abs() < 1e-8, "{} vs {want}", sol.v[1]);
    assert_eq!((sol.v[0], sol.theta[0]), (1.0, 0.0));
}

#[test]
fn residuals_hold_on_random_samples() {
    for (case, scale) in [("case10ba.m", 0.6), ("case33bw.m", 1.0), ("case141.m", 1.0)] {
        let net = load_case(case).scaled_injections(scale);
        let range = range_from_fractions(&net, 0.5, 1.5, &[]).unwrap();
        let model = PfModel::new(&net);
        let opt = PfOptions::default();
        for k in 0..1000 {
            let inj = draw_injection(&range, 17, k);
            let sol = model.solve(&inj, &opt).unwrap();
            assert!(sol.converged, "{case} sample {k}");
            assert!(sol.max_mismatch <= opt.tol);
            let mm = dense_mismatch(&net, &inj, &sol.v, &sol.theta);
            assert!(mm <= opt.tol * 1.0001 + 1e-14, "{case} sample {k}: {mm}");
        }
    }
}

#[test]
fn deterministic_output() {
    let net = load_case("case141.m");
    let range = range_from_fractions(&net, 0.5, 1.5, &[]).unwrap();
    let inj = draw_injection(&range, 3, 9);
    let a = solve_pf(&net, &inj, 1e-8, 30).unwrap();
    let b = solve_pf(&net, &inj, 1e-8, 30).unwrap();
    assert_eq!(a, b);
}

#[test]
fn lighter_loads_never_lower_min_voltage() {
    let net = load_case("case10ba.m").scaled_injections(0.6);
    let range = range_from_fractions(&net, 0.5, 1.5, &[]).unwrap();
    let model = PfModel::new(&net);
    let opt = PfOptions::default();
    for k in 0..200 {
        let inj = draw_injection(&range, 5, k);
        let mut prev = 0.0;
        for step in 0..=10 {
            let f = 1.0 - step as f64 / 10.0;
            let scaled = InjectionVector {
                p: inj.p.iter().map(|v| v * f).collect(),
                q: inj.q.iter().map(|v| v * f).collect(),
            };
            let sol = model.solve(&scaled, &opt).unwrap();
            let vmin = sol.v.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(vmin >= prev - 1e-12);
            prev = vmin;
        }
    }
}

#[test]
fn case10ba_low_corner_minimum_at_bus_10() {
    let net = load_case("case10ba.m").scaled_injections(0.6);
    let range = range_from_fractions(&net, 0.5, 1.5, &[]).unwrap();
    // Heaviest loads: most negative injections.
    let inj = InjectionVector { p: range.p_min.clone(), q: range.q_min.clone() };
    let sol = solve_pf(&net, &inj, 1e-8, 30).unwrap();
    let (k, _) = sol.v.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap();
    assert_eq!(net.buses[k].id, 10);
}

#[test]
fn singular_jacobian_is_reported() {
    // Parallel reactances +0.1 and -0.1 cancel, leaving an all-zero Jacobian.
    let mut net = two_bus(0.0, 0.1, -0.1, 0.0);
    net.lines.push(common::line(1, 2, 0.0, -0.1));
    let inj = InjectionVector { p: vec![-0.1], q: vec![0.0] };
    assert_eq!(
        solve_pf(&net, &inj, 1e-8, 30),
        Err(voltplace::powerflow::PfError::SingularJacobian { iteration: 0 })
    );
}

#[test]
fn voltvar_without_curves_is_plain_pf() {
    let net = load_case("case33bw.m");
    let range = range_from_fractions(&net, 0.5, 1.5, &[]).unwrap();
    let inj = draw_injection(&range, 1, 0);
    let plain = solve_pf(&net, &inj, 1e-8, 30).unwrap();
    let vv = solve_pf_voltvar(&net, &inj, &vec![None; 32], 1e-8, 30).unwrap();
    assert_eq!(plain, vv);
}

#[test]
fn voltvar_in_deadband_is_plain_pf() {
    let net = two_bus(0.01, 0.01, -0.1, -0.05);
    let inj = InjectionVector { p: vec![-0.1], q: vec![-0.05] };
    let plain = solve_pf(&net, &inj, 1e-10, 30).unwrap();
    assert!(plain.v[1] > 0.98 && plain.v[1] < 1.0);
    let curve = VoltVarCurve::default_droop(0.3);
    assert_eq!(curve.output(plain.v[1]), 0.0);
    let vv = solve_pf_voltvar(&net, &inj, &[Some(curve)], 1e-10, 30).unwrap();
    assert_eq!(plain, vv);
}

#[test]
fn voltvar_matches_damped_alternation() {
    // Low voltage region: the curve saturates at full injection only below 0.92.
    let net = two_bus(0.1, 0.1, -0.6, -0.2);
    let inj = InjectionVector { p: vec![-0.6], q: vec![-0.2] };
    let curve = VoltVarCurve::default_droop(0.3);
    let vv = solve_pf_voltvar(&net, &inj, &[Some(curve.clone())], 1e-12, 30).unwrap();
    assert!(vv.converged);
    // Oracle: damped alternation using the closed-form two-bus voltage.
    let mut q = 0.0;
    let mut v = 0.0;
    for _ in 0..10_000 {
        v = two_bus_voltage(0.1, 0.1, 0.6, 0.2 - q);
        q += 0.5 * (curve.output(v) - q);
    }
    assert!((vv.v[1] - v).abs() < 1e-10, "{} vs {v}", vv.v[1]);
    assert!((curve.output(vv.v[1]) - q).abs() < 1e-9);
}

#[test]
fn voltvar_curve_validation() {
    let mut c = VoltVarCurve::default_droop(0.2);
    assert!(c.validate().is_ok());
    c.breakpoints[2].0 = 0.97;
    assert!(c.validate().is_err());
    let mut c = VoltVarCurve::default_droop(0.2);
    c.breakpoints[0].1 = 1.5;
    assert!(c.validate().is_err());
}
