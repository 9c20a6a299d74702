mod common;

use common::{bus, data_path, line, load_case};
use voltplace::netmodel::{
    apply_configuration, build_admittance, load_native, parse_matpower, to_native, BusKind, Configuration,
    LineStatus, NetError, Network, Study,
};
use voltplace::sampling::range_from_fractions;

const MINIMAL: &str = "function mpc = tiny
mpc.baseMVA = 100;
%% bus data
mpc.bus = [
\t1\t3\t0\t0\t0\t0\t1\t1\t0\t12.66\t1\t1\t1;
\t2\t1\t100\t50\t0\t0\t1\t1\t0\t12.66\t1\t1.1\t0.9;  % a load
];
mpc.branch = [
\t1\t2\t0.01\t0.02\t0\t0\t0\t0\t0\t0\t1\t-360\t360;
];
";

#[test]
fn minimal_case_maps_fields() {
    let net = parse_matpower(MINIMAL).unwrap();
    assert_eq!(net.buses.len(), 2);
    assert_eq!(net.buses[0].kind, BusKind::Slack);
    assert_eq!(net.buses[1].p_nom, -1.0);
    assert_eq!(net.buses[1].q_nom, -0.5);
    assert_eq!((net.buses[1].v_min, net.buses[1].v_max), (0.9, 1.1));
    assert_eq!(net.lines[0].status, LineStatus::Closed);
}

#[test]
fn status_zero_opens_line() {
    let text = MINIMAL.replace("0\t0\t1\t-360", "0\t0\t0\t-360");
    let net = parse_matpower(&text);
    // The only line is open, so bus 2 is islanded.
    assert!(matches!(net, Err(NetError::Invalid(_))));
    let text = MINIMAL.replace(
        "\t1\t2\t0.01\t0.02\t0\t0\t0\t0\t0\t0\t1\t-360\t360;\n",
        "\t1\t2\t0.01\t0.02\t0\t0\t0\t0\t0\t0\t1\t-360\t360;\n\t1\t2\t0.03\t0.04\t0\t0\t0\t0\t0\t0\t0\t-360\t360;\n",
    );
    let net = parse_matpower(&text).unwrap();
    assert_eq!(net.lines[1].status, LineStatus::Open);
}

#[test]
fn parse_errors() {
    let no_branch = MINIMAL.split("mpc.branch").next().unwrap();
    match parse_matpower(no_branch) {
        Err(NetError::MissingMatrix(m)) => assert!(m.contains("branch")),
        other => panic!("{other:?}"),
    }
    let bad = MINIMAL.replace("100\t50", "1x0\t50");
    match parse_matpower(&bad) {
        Err(NetError::Parse { line, .. }) => assert_eq!(line, 6),
        other => panic!("{other:?}"),
    }
    let two_slack = MINIMAL.replace("\t2\t1\t100", "\t2\t3\t100");
    assert!(matches!(parse_matpower(&two_slack), Err(NetError::Invalid(_))));
    let odd = format!("{MINIMAL}\nmpc.bus(:, VMAX) = 1.2;\n");
    assert!(matches!(parse_matpower(&odd), Err(NetError::Parse { line: 12, .. })));
}

#[test]
fn case10ba_is_a_single_chain() {
    let net = load_case("case10ba.m");
    assert_eq!(net.buses.len(), 10);
    assert_eq!(net.pq_indices().len(), 9);
    assert!(net.is_radial());
    assert_eq!(net.leaf_buses(), vec![10]);
    for k in 1..10 {
        assert_eq!(net.neighbors(k + 1).contains(&k), true);
    }
}

#[test]
fn unit_conversion_trailer() {
    // case33bw gives ohms and kW; the first line is 0.0922 + j0.0470 ohm on 12.66 kV, 10 MVA.
    let net = load_case("case33bw.m");
    let zb = 12.66f64.powi(2) / 10.0;
    assert!((net.lines[0].r - 0.0922 / zb).abs() < 1e-15);
    assert!((net.lines[0].x - 0.0470 / zb).abs() < 1e-15);
    // Bus 2 load 100 kW + j60 kVAr.
    assert!((net.buses[1].p_nom + 0.1 / 10.0).abs() < 1e-15);
    assert!((net.buses[1].q_nom + 0.06 / 10.0).abs() < 1e-15);
    // case141 splits kVA into P and Q at power factor 0.85.
    let text = std::fs::read_to_string(data_path("case141.m")).unwrap();
    let net = parse_matpower(&text).unwrap();
    assert_eq!(net.buses.len(), 141);
    let b = net.buses.iter().find(|b| b.p_nom != 0.0).unwrap();
    let ratio = b.q_nom / b.p_nom;
    assert!((ratio - 0.85f64.acos().tan()).abs() < 1e-12);
}

#[test]
fn admittance_examples() {
    let mut net = Network {
        base_mva: 1.0,
        buses: vec![bus(1, BusKind::Slack), bus(2, BusKind::Pq)],
        lines: vec![line(1, 2, 0.0, 0.1)],
    };
    let y = build_admittance(&net);
    assert!((y[0][1].re).abs() < 1e-15 && (y[0][1].im - 10.0).abs() < 1e-12);
    assert!((y[0][0].im + 10.0).abs() < 1e-12);
    net.lines[0].status = LineStatus::Open;
    let y = build_admittance(&net);
    assert!(y.iter().flatten().all(|v| v.norm() == 0.0));

    let mut star = Network {
        base_mva: 1.0,
        buses: vec![bus(1, BusKind::Slack), bus(2, BusKind::Pq), bus(3, BusKind::Pq)],
        lines: vec![line(1, 2, 0.1, 0.2), line(1, 3, 0.05, 0.3)],
    };
    star.buses[2].b_sh = 0.01;
    let y = build_admittance(&star);
    for i in 0..3 {
        let s: num_complex::Complex64 = y[i].iter().sum();
        let sh = num_complex::Complex64::new(star.buses[i].g_sh, star.buses[i].b_sh);
        assert!((s - sh).norm() < 1e-12);
        for k in 0..3 {
            assert!((y[i][k] - y[k][i]).norm() < 1e-12);
        }
    }
}

#[test]
fn admittance_symmetric_on_cases() {
    for case in ["case10ba.m", "case33bw.m", "case141.m"] {
        let y = build_admittance(&load_case(case));
        for i in 0..y.len() {
            for k in 0..y.len() {
                assert!((y[i][k] - y[k][i]).norm() <= 1e-12);
            }
        }
    }
}

#[test]
fn configuration_application() {
    let net = load_case("case33bw.m");
    let same = apply_configuration(&net, &Configuration::nominal()).unwrap();
    assert_eq!(same, net);
    // Opening the line into bus 18 islands it.
    let k = net.find_line(17, 18).unwrap();
    let cut = Configuration {
        name: "cut".into(),
        line_status_overrides: vec![(k, LineStatus::Open)],
    };
    match apply_configuration(&net, &cut) {
        Err(NetError::Disconnected { name, bus }) => assert_eq!((name.as_str(), bus), ("cut", 18)),
        other => panic!("{other:?}"),
    }
    assert_eq!(net.lines[k].status, LineStatus::Closed);
    let bad = Configuration {
        name: "bad".into(),
        line_status_overrides: vec![(999, LineStatus::Open)],
    };
    assert!(matches!(apply_configuration(&net, &bad), Err(NetError::UnknownLine { .. })));
}

fn study_of(net: Network) -> Study {
    let range = range_from_fractions(&net, 0.5, 1.5, &[]).unwrap();
    Study {
        network: net,
        configurations: vec![Configuration::nominal()],
        injection_range: range,
        limits: Default::default(),
    }
}

#[test]
fn native_round_trip_is_identity() {
    for case in ["case10ba.m", "case33bw.m", "case141.m"] {
        let net = load_case(case);
        let study = study_of(net.clone());
        let text = to_native(&study);
        let back = load_native(&text).unwrap();
        assert_eq!(back.network, net);
        assert_eq!(back.injection_range, study.injection_range);
        assert_eq!(back.configurations, vec![Configuration::nominal()]);
    }
}

#[test]
fn native_defaults_and_errors() {
    let net = load_case("case10ba.m");
    let text = to_native(&study_of(net.clone()));
    let mut doc: serde_json::Value = serde_json::from_str(&text).unwrap();
    doc.as_object_mut().unwrap().remove("injection_range");
    let back = load_native(&doc.to_string()).unwrap();
    assert_eq!(back.injection_range, range_from_fractions(&net, 0.5, 1.5, &[]).unwrap());

    let mut broken = doc.clone();
    broken["network"]["lines"][3]["to"] = serde_json::json!(77);
    match load_native(&broken.to_string()) {
        Err(NetError::Schema { path, .. }) => assert_eq!(path, "network.lines[3].to"),
        other => panic!("{other:?}"),
    }
    let mut typo = doc.clone();
    typo["network"]["buses"][2]["v_mn"] = serde_json::json!(0.9);
    match load_native(&typo.to_string()) {
        Err(NetError::Schema { path, .. }) => assert!(path.starts_with("network.buses[2]"), "{path}"),
        other => panic!("{other:?}"),
    }
    let mut iso = doc.clone();
    iso["configurations"] = serde_json::json!([{ "name": "island", "overrides": [{ "from": 9, "to": 10, "status": "open" }] }]);
    match load_native(&iso.to_string()) {
        Err(NetError::Disconnected { name, .. }) => assert_eq!(name, "island"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn three_configuration_case33bw() {
    let text = std::fs::read_to_string(data_path("case33bw_3config.json")).unwrap();
    let study = load_native(&text).unwrap();
    assert_eq!(study.configurations.len(), 3);
    let c2 = apply_configuration(&study.network, &study.configurations[1]).unwrap();
    assert!(c2.neighbors(18).contains(&4));
    assert!(!c2.neighbors(6).contains(&7));
    let c3 = apply_configuration(&study.network, &study.configurations[2]).unwrap();
    assert!(c3.neighbors(25).contains(&33));
    assert!(!c3.neighbors(6).contains(&26));
    for cfg in &study.configurations {
        assert!(apply_configuration(&study.network, cfg).unwrap().is_radial());
    }
}
