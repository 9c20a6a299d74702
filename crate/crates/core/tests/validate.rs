mod common;

use voltplace::netmodel::BusKind;
use voltplace::placement::{ConfigThresholds, PlacementSolution, SensorThreshold};
use voltplace::powerflow::PfSolution;
use voltplace::sampling::{draw_samples, SampleOptions};
use voltplace::validate::*;

fn pf(v: Vec<f64>) -> PfSolution {
    PfSolution {
        theta: vec![0.0; v.len()],
        v,
        iterations: 1,
        converged: true,
        max_mismatch: 0.0,
    }
}

fn three_bus() -> voltplace::netmodel::Network {
    let mut net = common::two_bus(0.01, 0.01, -0.1, -0.05);
    net.buses.push(common::bus(3, BusKind::Pq));
    net.lines.push(common::line(2, 3, 0.01, 0.01));
    net
}

fn at_limits(config: &str, buses: &[usize]) -> ConfigThresholds {
    ConfigThresholds {
        config: config.into(),
        sensors: buses
            .iter()
            .map(|&bus| SensorThreshold { bus, lower: 0.9, upper: 1.05, v_min: 0.9, v_max: 1.05 })
            .collect(),
    }
}

fn solution(thr: ConfigThresholds) -> PlacementSolution {
    PlacementSolution {
        sensors: thr.sensors.iter().map(|s| s.bus).collect(),
        thresholds: vec![thr],
        objective: 0.0,
        audit: Vec::new(),
        solver: None,
    }
}

#[test]
fn classification_cells() {
    let net = three_bus();
    let thr = at_limits("n", &[3]);
    assert_eq!(classify(&thr, &net, &pf(vec![1.0, 1.0, 1.0])).unwrap(), Outcome::TrueOk);
    // violation at sensorless bus 2
    assert_eq!(classify(&thr, &net, &pf(vec![1.0, 0.89, 0.95])).unwrap(), Outcome::FalseNegative);
    assert_eq!(classify(&thr, &net, &pf(vec![1.0, 0.95, 0.89])).unwrap(), Outcome::TrueAlarm);
    let tight = ConfigThresholds {
        config: "n".into(),
        sensors: vec![SensorThreshold { bus: 3, lower: 0.95, upper: 1.05, v_min: 0.9, v_max: 1.05 }],
    };
    assert_eq!(classify(&tight, &net, &pf(vec![1.0, 0.95, 0.93])).unwrap(), Outcome::FalsePositive);
    // the slack bus never counts as a violation
    assert_eq!(classify(&thr, &net, &pf(vec![1.2, 1.0, 1.0])).unwrap(), Outcome::TrueOk);
}

#[test]
fn unknown_sensor_is_an_error() {
    let net = three_bus();
    assert!(matches!(
        classify(&at_limits("n", &[7]), &net, &pf(vec![1.0; 3])),
        Err(ValidateError::UnknownSensor { bus: 7, .. })
    ));
}

#[test]
fn sensors_everywhere_at_limits_are_exact() {
    let c = common::case10ba();
    let all = at_limits("nominal", &c.net.pq_ids());
    let counts = counts(&all, &c.net, &c.train).unwrap();
    assert_eq!(counts.n_fp, 0);
    assert_eq!(counts.n_fn, 0);
    assert!(counts.n_violating > 0);
}

#[test]
fn counts_are_order_independent_and_consistent() {
    let c = common::case10ba();
    let thr = ConfigThresholds {
        config: "nominal".into(),
        sensors: vec![SensorThreshold { bus: 10, lower: 0.905, upper: 1.05, v_min: 0.9, v_max: 1.05 }],
    };
    let a = counts(&thr, &c.net, &c.train).unwrap();
    let mut rev = c.train.clone();
    rev.solutions.reverse();
    rev.injections.reverse();
    assert_eq!(counts(&thr, &c.net, &rev).unwrap(), a);
    assert_eq!(a.n_feasible + a.n_violating, a.n_samples);
    assert!(a.n_fp <= a.n_feasible && a.n_fn <= a.n_violating);
    assert_eq!(a.fp_rate, a.n_fp as f64 / a.n_feasible as f64);
    assert!(a.n_fp > 0);
}

#[test]
fn mismatched_samples_are_rejected() {
    let c = common::case10ba();
    let net = three_bus();
    let other = draw_samples(&net, &voltplace::sampling::range_from_fractions(&net, 1.0, 1.0, &[]).unwrap(), 1, 0, &SampleOptions::default(), "x")
        .unwrap();
    assert!(matches!(counts(&at_limits("nominal", &[10]), &c.net, &other), Err(ValidateError::Layout)));
}

#[test]
fn case10ba_out_of_sample() {
    let c = common::case10ba();
    let sol = solution(at_limits("nominal", &[10]));
    let case = ValidationCase { name: "nominal", net: &c.net, range: &c.range };
    let rep = evaluate(&sol, &[case], 10_000, 3, &SampleOptions::default()).unwrap();
    assert_eq!(rep.totals.n_samples, 10_000);
    assert_eq!(rep.totals.n_fn, 0);
    assert_eq!(rep.totals.n_fp, 0);
    let share = rep.totals.n_feasible as f64 / 10_000.0;
    assert!((share - 0.7317).abs() < 0.03, "feasible share {share}");
    assert_eq!(rep.configs[0].counts, rep.totals);
    assert!(rep.denominators.contains("violating"));
}

#[test]
fn evaluate_requires_thresholds_and_samples() {
    let c = common::case10ba();
    let sol = solution(at_limits("nominal", &[10]));
    let case = ValidationCase { name: "other", net: &c.net, range: &c.range };
    assert!(matches!(
        evaluate(&sol, &[case], 10, 1, &SampleOptions::default()),
        Err(ValidateError::MissingConfig(_))
    ));
    let case = ValidationCase { name: "nominal", net: &c.net, range: &c.range };
    assert!(matches!(evaluate(&sol, &[case], 0, 1, &SampleOptions::default()), Err(ValidateError::NoSamples)));
}

#[test]
fn table_has_one_column_per_run() {
    let counts = Counts { n_samples: 10, n_feasible: 8, n_violating: 2, n_fp: 1, n_fn: 0, fp_rate: 0.125, fn_rate: 0.0 };
    let cols = vec![
        TableColumn {
            label: "milp".into(),
            seconds: Some(1.5),
            sensors: vec![10],
            thresholds: threshold_strings(&at_limits("n", &[10])),
            report: Some(counts),
            note: None,
        },
        TableColumn {
            label: "kkt".into(),
            seconds: None,
            sensors: vec![],
            thresholds: vec![],
            report: None,
            note: Some("skipped (guard)".into()),
        },
    ];
    let t = render_table(&cols);
    let lines: Vec<&str> = t.lines().collect();
    assert_eq!(lines.len(), 7);
    assert!(lines[0].contains("milp") && lines[0].contains("kkt"));
    assert!(lines[1].contains("1.50") && lines[1].contains("skipped (guard)"));
    assert!(lines[3].contains("10: [0.9000, 1.0500]"));
    assert!(lines[5].contains("12.50"));
}
