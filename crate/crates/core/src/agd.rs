//! Approximate gradient descent on alarm thresholds: widen thresholds to cut
//! sampled false positives while never creating a sampled false negative.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netmodel::Network;
use crate::placement::{cost, ConfigThresholds, LimitSide, PlacementSolution};
use crate::sampling::SampleSet;
use crate::validate::{Classifier, ValidateError};

#[derive(Debug, Error)]
pub enum AgdError {
    #[error("step must be positive, got {0}")]
    Step(f64),
    #[error("no samples for configuration {0}")]
    NoSamples(String),
    #[error("sensor bus {0} has no threshold in this configuration")]
    UnknownSensor(usize),
    #[error(transparent)]
    Validate(#[from] ValidateError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgdOptions {
    pub step: f64,
    pub max_iter: usize,
}

impl Default for AgdOptions {
    fn default() -> Self {
        Self { step: 2e-4, max_iter: 500 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    ZeroGradient,
    FalseNegative,
    MaxIter,
}

/// One accepted state; `thresholds` holds (bus, lower, upper).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgdStep {
    pub k: usize,
    pub fp: usize,
    pub fn_count: usize,
    pub thresholds: Vec<(usize, f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgdRun {
    pub config: String,
    pub stop: StopReason,
    pub iterations: usize,
    pub history: Vec<AgdStep>,
    #[serde(skip)]
    pub seconds: f64,
}

impl AgdRun {
    pub fn initial_fp(&self) -> usize {
        self.history[0].fp
    }

    pub fn final_state(&self) -> &AgdStep {
        self.history.last().expect("history starts with the initial state")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgdResult {
    pub solution: PlacementSolution,
    pub runs: Vec<AgdRun>,
}

/// Samples of one configuration used for counting.
#[derive(Clone, Copy, Debug)]
pub struct AgdCase<'a> {
    pub net: &'a Network,
    pub samples: &'a SampleSet,
}

/// Sensor voltages and violation flags, fixed over a run.
struct View {
    violating: Vec<bool>,
    /// Per sample, voltage at each sensor in threshold order.
    volts: Vec<Vec<f64>>,
}

impl View {
    fn new(thr: &ConfigThresholds, case: &AgdCase<'_>) -> Result<Self, AgdError> {
        if case.samples.is_empty() {
            return Err(AgdError::NoSamples(thr.config.clone()));
        }
        let cl = Classifier::new(thr, case.net)?;
        let cols: Vec<usize> = thr
            .sensors
            .iter()
            .map(|s| case.net.index_of(s.bus).ok_or(AgdError::UnknownSensor(s.bus)))
            .collect::<Result<_, _>>()?;
        let violating = case.samples.solutions.par_iter().map(|s| cl.violation(&s.v)).collect();
        let volts = case
            .samples
            .solutions
            .iter()
            .map(|s| cols.iter().map(|&c| s.v[c]).collect())
            .collect();
        Ok(Self { violating, volts })
    }

    /// (false positives, false negatives) for thresholds `(lower, upper)`.
    fn score(&self, th: &[(f64, f64)]) -> (usize, usize) {
        self.volts
            .par_iter()
            .zip(&self.violating)
            .map(|(v, &bad)| {
                let alarm = v.iter().zip(th).any(|(&x, &(lo, hi))| x < lo || x > hi);
                match (bad, alarm) {
                    (false, true) => (1, 0),
                    (true, false) => (0, 1),
                    _ => (0, 0),
                }
            })
            .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1))
    }
}

fn relaxed(thr: &ConfigThresholds, th: &[(f64, f64)], k: usize, side: LimitSide, amount: f64) -> (f64, f64) {
    let s = &thr.sensors[k];
    let (lo, hi) = th[k];
    match side {
        LimitSide::Lower => ((lo - amount).max(s.v_min), hi),
        LimitSide::Upper => (lo, (hi + amount).min(s.v_max)),
    }
}

fn current(thr: &ConfigThresholds) -> Vec<(f64, f64)> {
    thr.sensors.iter().map(|s| (s.lower, s.upper)).collect()
}

/// Change in the sampled false-positive count when one threshold of sensor
/// `bus` moves by `step` in its relaxation direction (down for the lower
/// threshold, up for the upper one), clamped at the voltage limit.
pub fn delta_fp(
    thr: &ConfigThresholds,
    case: &AgdCase<'_>,
    bus: usize,
    side: LimitSide,
    step: f64,
) -> Result<i64, AgdError> {
    let k = thr.sensors.iter().position(|s| s.bus == bus).ok_or(AgdError::UnknownSensor(bus))?;
    let view = View::new(thr, case)?;
    let th = current(thr);
    let mut moved = th.clone();
    moved[k] = relaxed(thr, &th, k, side, step);
    Ok(view.score(&moved).0 as i64 - view.score(&th).0 as i64)
}

fn run_config(thr: &ConfigThresholds, case: &AgdCase<'_>, opts: &AgdOptions) -> Result<(ConfigThresholds, AgdRun), AgdError> {
    let started = Instant::now();
    let view = View::new(thr, case)?;
    let mut th = current(thr);
    let (mut fp, mut fneg) = view.score(&th);
    let snapshot = |k: usize, fp: usize, fneg: usize, th: &[(f64, f64)]| AgdStep {
        k,
        fp,
        fn_count: fneg,
        thresholds: thr.sensors.iter().zip(th).map(|(s, &(l, u))| (s.bus, l, u)).collect(),
    };
    let mut history = vec![snapshot(0, fp, fneg, &th)];
    let coords: Vec<(usize, LimitSide)> = (0..th.len())
        .flat_map(|k| [(k, LimitSide::Lower), (k, LimitSide::Upper)])
        .collect();
    let mut stop = StopReason::MaxIter;
    let mut iterations = 0;
    for k in 1..=opts.max_iter {
        let grad: Vec<f64> = coords
            .iter()
            .map(|&(i, side)| {
                let mut moved = th.clone();
                moved[i] = relaxed(thr, &th, i, side, opts.step);
                view.score(&moved).0 as f64 - fp as f64
            })
            .collect();
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm == 0.0 {
            stop = StopReason::ZeroGradient;
            break;
        }
        let mut cand = th.clone();
        for (&(i, side), g) in coords.iter().zip(&grad) {
            cand[i] = relaxed(thr, &cand, i, side, opts.step * (g / norm).abs());
        }
        let (cfp, cfn) = view.score(&cand);
        if cfn > fneg {
            stop = StopReason::FalseNegative;
            break;
        }
        th = cand;
        fp = cfp;
        fneg = cfn;
        iterations = k;
        history.push(snapshot(k, fp, fneg, &th));
    }
    let mut out = thr.clone();
    for (s, &(l, u)) in out.sensors.iter_mut().zip(&th) {
        s.lower = l;
        s.upper = u;
    }
    Ok((
        out,
        AgdRun {
            config: thr.config.clone(),
            stop,
            iterations,
            history,
            seconds: started.elapsed().as_secs_f64(),
        },
    ))
}

/// Runs AGD independently for every configuration of `sol`, each on the
/// matching entry of `cases`. The widened thresholds are checked on the
/// samples only, so the returned solution carries no LP audit.
pub fn agd_refine(
    sol: &PlacementSolution,
    cases: &[AgdCase<'_>],
    opts: &AgdOptions,
    delta: f64,
) -> Result<AgdResult, AgdError> {
    if !(opts.step > 0.0) {
        return Err(AgdError::Step(opts.step));
    }
    let mut thresholds = Vec::with_capacity(sol.thresholds.len());
    let mut runs = Vec::with_capacity(sol.thresholds.len());
    for thr in &sol.thresholds {
        let case = cases
            .iter()
            .find(|c| c.samples.config == thr.config)
            .ok_or_else(|| AgdError::NoSamples(thr.config.clone()))?;
        let (t, run) = run_config(thr, case, opts)?;
        thresholds.push(t);
        runs.push(run);
    }
    let solution = PlacementSolution {
        sensors: sol.sensors.clone(),
        objective: cost(&thresholds, delta),
        thresholds,
        audit: Vec::new(),
        solver: sol.solver.clone(),
    };
    Ok(AgdResult { solution, runs })
}

/// History as CSV: config, k, fp, fn, then lower/upper per sensor bus.
pub fn write_history<W: Write>(runs: &[AgdRun], w: W) -> Result<(), AgdError> {
    let mut out = csv::WriterBuilder::new().flexible(true).from_writer(w);
    for run in runs {
        let mut head = vec!["config".to_string(), "k".into(), "fp".into(), "fn".into()];
        for &(bus, _, _) in &run.history[0].thresholds {
            head.push(format!("lower_{bus}"));
            head.push(format!("upper_{bus}"));
        }
        out.write_record(&head)?;
        for st in &run.history {
            let mut rec = vec![run.config.clone(), st.k.to_string(), st.fp.to_string(), st.fn_count.to_string()];
            for &(_, l, u) in &st.thresholds {
                rec.push(format!("{l}"));
                rec.push(format!("{u}"));
            }
            out.write_record(&rec)?;
        }
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}
