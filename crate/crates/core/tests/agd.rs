mod common;

use voltplace::agd::*;
use voltplace::placement::{solve_placement, ConfigThresholds, LimitSide, PlacementOptions, PlacementSolution, PlacementSpec, SensorThreshold};
use voltplace::validate::counts;

fn single(bus: usize, lower: f64, v_min: f64) -> PlacementSolution {
    let thr = ConfigThresholds {
        config: "nominal".into(),
        sensors: vec![SensorThreshold { bus, lower, upper: 1.05, v_min, v_max: 1.05 }],
    };
    PlacementSolution { sensors: vec![bus], thresholds: vec![thr], objective: 0.0, audit: Vec::new(), solver: None }
}

fn check_monotone(run: &AgdRun) {
    for w in run.history.windows(2) {
        assert!(w[1].fp <= w[0].fp, "fp rose at k={}", w[1].k);
        assert_eq!(w[1].fn_count, 0);
    }
    for st in &run.history {
        for &(_, l, u) in &st.thresholds {
            assert!(l >= 0.9 - 1e-15 && u <= 1.05 + 1e-15);
        }
    }
}

#[test]
fn case10ba_descends_to_the_limit() {
    let c = common::case10ba();
    let sol = single(10, 0.9017, 0.9);
    let case = AgdCase { net: &c.net, samples: &c.train };
    let res = agd_refine(&sol, &[case], &AgdOptions::default(), 0.02).unwrap();
    let run = &res.runs[0];
    assert!(run.initial_fp() > 0);
    assert_eq!(run.final_state().fp, 0);
    assert_eq!(run.final_state().fn_count, 0);
    assert_eq!(res.solution.thresholds[0].sensors[0].lower, 0.9);
    assert_eq!(run.stop, StopReason::ZeroGradient);
    check_monotone(run);
    assert!(res.solution.audit.is_empty());
    assert!((res.solution.objective - 0.02).abs() < 1e-12);
}

#[test]
fn zero_fp_start_is_unchanged() {
    let c = common::case10ba();
    let sol = single(10, 0.9, 0.9);
    let res = agd_refine(&sol, &[AgdCase { net: &c.net, samples: &c.train }], &AgdOptions::default(), 0.02).unwrap();
    assert_eq!(res.runs[0].iterations, 0);
    assert_eq!(res.runs[0].stop, StopReason::ZeroGradient);
    assert_eq!(res.solution.thresholds, sol.thresholds);
}

#[test]
fn delta_is_zero_at_the_limit_and_without_alarms() {
    let c = common::case10ba();
    let case = AgdCase { net: &c.net, samples: &c.train };
    let at = single(10, 0.9, 0.9);
    assert_eq!(delta_fp(&at.thresholds[0], &case, 10, LimitSide::Lower, 2e-4).unwrap(), 0);
    assert_eq!(delta_fp(&at.thresholds[0], &case, 10, LimitSide::Upper, 2e-4).unwrap(), 0);
    // bus 2 never reads below 0.95 in the samples
    let quiet = single(2, 0.95, 0.9);
    assert_eq!(delta_fp(&quiet.thresholds[0], &case, 2, LimitSide::Lower, 2e-4).unwrap(), 0);
    assert!(delta_fp(&at.thresholds[0], &case, 4, LimitSide::Lower, 2e-4).is_err());
}

#[test]
fn case33bw_delta_matches_recount() {
    let c = common::case33bw();
    let sol = solve_placement(&PlacementSpec { configs: vec![c.input.clone()], options: PlacementOptions::default() }).unwrap();
    let case = AgdCase { net: &c.net, samples: &c.train };
    let thr = &sol.thresholds[0];
    let base = counts(thr, &c.net, &c.train).unwrap().n_fp as i64;
    let mut negative = 0;
    for s in &thr.sensors {
        let d = delta_fp(thr, &case, s.bus, LimitSide::Lower, 2e-4).unwrap();
        let mut moved = thr.clone();
        let m = moved.sensors.iter_mut().find(|m| m.bus == s.bus).unwrap();
        m.lower = (m.lower - 2e-4).max(m.v_min);
        let recount = counts(&moved, &c.net, &c.train).unwrap().n_fp as i64;
        assert_eq!(d, recount - base, "sensor {}", s.bus);
        negative += (d < 0) as usize;
    }
    assert!(negative > 0);
    let res = agd_refine(&sol, &[case], &AgdOptions::default(), 0.02).unwrap();
    check_monotone(&res.runs[0]);
    assert!(res.runs[0].final_state().fp < res.runs[0].initial_fp());
}

#[test]
fn history_csv_lists_thresholds() {
    let c = common::case10ba();
    let res = agd_refine(&single(10, 0.9017, 0.9), &[AgdCase { net: &c.net, samples: &c.train }], &AgdOptions::default(), 0.02)
        .unwrap();
    let mut buf = Vec::new();
    write_history(&res.runs, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "config,k,fp,fn,lower_10,upper_10");
    assert_eq!(lines.len(), res.runs[0].history.len() + 1);
    assert!(lines[1].starts_with("nominal,0,"));
}

#[test]
fn rejects_bad_step_and_missing_samples() {
    let c = common::case10ba();
    let sol = single(10, 0.9017, 0.9);
    let case = AgdCase { net: &c.net, samples: &c.train };
    assert!(matches!(
        agd_refine(&sol, &[case], &AgdOptions { step: 0.0, max_iter: 5 }, 0.02),
        Err(AgdError::Step(_))
    ));
    assert!(matches!(agd_refine(&sol, &[], &AgdOptions::default(), 0.02), Err(AgdError::NoSamples(_))));
    let capped = agd_refine(&sol, &[case], &AgdOptions { step: 2e-4, max_iter: 2 }, 0.02).unwrap();
    assert_eq!(capped.runs[0].stop, StopReason::MaxIter);
    assert_eq!(capped.runs[0].iterations, 2);
}
