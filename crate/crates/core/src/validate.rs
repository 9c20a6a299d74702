//! Out-of-sample evaluation of a placement: alarm/violation classification
//! and false-positive/false-negative statistics.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netmodel::{BusKind, Network};
use crate::placement::{ConfigThresholds, PlacementSolution};
use crate::powerflow::PfSolution;
use crate::sampling::{draw_samples, InjectionRange, SampleError, SampleOptions, SampleSet};

#[derive(Debug, Error)]
pub enum ValidateError {
    #[error("solution has no thresholds for configuration {0}")]
    MissingConfig(String),
    #[error("sensor bus {bus} is not in configuration {config}")]
    UnknownSensor { config: String, bus: usize },
    #[error("sample set belongs to a different network layout")]
    Layout,
    #[error("sample count must be at least 1")]
    NoSamples,
    #[error(transparent)]
    Sample(#[from] SampleError),
}

/// Cell of the alarm/violation confusion table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    TrueOk,
    FalsePositive,
    FalseNegative,
    TrueAlarm,
}

/// Threshold and limit lookup for one configuration, resolved to voltage
/// columns of a network's bus order.
#[derive(Clone, Debug)]
pub struct Classifier {
    sensors: Vec<(usize, f64, f64)>,
    limits: Vec<(usize, f64, f64)>,
}

impl Classifier {
    /// Limits apply at every non-slack bus.
    pub fn new(thr: &ConfigThresholds, net: &Network) -> Result<Self, ValidateError> {
        let sensors = thr
            .sensors
            .iter()
            .map(|s| {
                net.index_of(s.bus)
                    .map(|c| (c, s.lower, s.upper))
                    .ok_or_else(|| ValidateError::UnknownSensor {
                        config: thr.config.clone(),
                        bus: s.bus,
                    })
            })
            .collect::<Result<_, _>>()?;
        let limits = net
            .buses
            .iter()
            .enumerate()
            .filter(|(_, b)| b.kind != BusKind::Slack)
            .map(|(c, b)| (c, b.v_min, b.v_max))
            .collect();
        Ok(Self { sensors, limits })
    }

    pub fn alarm(&self, v: &[f64]) -> bool {
        self.sensors.iter().any(|&(c, lo, hi)| v[c] < lo || v[c] > hi)
    }

    pub fn violation(&self, v: &[f64]) -> bool {
        self.limits.iter().any(|&(c, lo, hi)| v[c] < lo || v[c] > hi)
    }

    pub fn classify(&self, v: &[f64]) -> Outcome {
        match (self.violation(v), self.alarm(v)) {
            (false, false) => Outcome::TrueOk,
            (false, true) => Outcome::FalsePositive,
            (true, false) => Outcome::FalseNegative,
            (true, true) => Outcome::TrueAlarm,
        }
    }
}

/// Classifies one power-flow solution of `net` under the thresholds.
pub fn classify(thr: &ConfigThresholds, net: &Network, pf: &PfSolution) -> Result<Outcome, ValidateError> {
    Ok(Classifier::new(thr, net)?.classify(&pf.v))
}

/// Raw counts and rates. FP are taken over feasible points and FN over
/// violating points.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub n_samples: usize,
    pub n_feasible: usize,
    pub n_violating: usize,
    pub n_fp: usize,
    pub n_fn: usize,
    pub fp_rate: f64,
    pub fn_rate: f64,
}

impl Counts {
    fn from_outcomes(out: impl Iterator<Item = Outcome>) -> Self {
        let mut c = Counts::default();
        for o in out {
            c.n_samples += 1;
            match o {
                Outcome::TrueOk => c.n_feasible += 1,
                Outcome::FalsePositive => {
                    c.n_feasible += 1;
                    c.n_fp += 1
                }
                Outcome::FalseNegative => {
                    c.n_violating += 1;
                    c.n_fn += 1
                }
                Outcome::TrueAlarm => c.n_violating += 1,
            }
        }
        c.rates()
    }

    fn rates(mut self) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        self.fp_rate = ratio(self.n_fp, self.n_feasible);
        self.fn_rate = ratio(self.n_fn, self.n_violating);
        self
    }

    fn add(&self, o: &Counts) -> Counts {
        Counts {
            n_samples: self.n_samples + o.n_samples,
            n_feasible: self.n_feasible + o.n_feasible,
            n_violating: self.n_violating + o.n_violating,
            n_fp: self.n_fp + o.n_fp,
            n_fn: self.n_fn + o.n_fn,
            fp_rate: 0.0,
            fn_rate: 0.0,
        }
        .rates()
    }
}

/// Confusion counts of a sample set of `net` under the thresholds.
pub fn counts(thr: &ConfigThresholds, net: &Network, samples: &SampleSet) -> Result<Counts, ValidateError> {
    if samples.bus_ids.len() != net.buses.len() || samples.bus_ids.iter().zip(&net.buses).any(|(&a, b)| a != b.id) {
        return Err(ValidateError::Layout);
    }
    let cl = Classifier::new(thr, net)?;
    let out: Vec<Outcome> = samples.solutions.par_iter().map(|s| cl.classify(&s.v)).collect();
    Ok(Counts::from_outcomes(out.into_iter()))
}

/// One configuration to validate against.
#[derive(Clone, Debug)]
pub struct ValidationCase<'a> {
    pub name: &'a str,
    pub net: &'a Network,
    pub range: &'a InjectionRange,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigReport {
    pub config: String,
    #[serde(flatten)]
    pub counts: Counts,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub seed: u64,
    pub denominators: String,
    #[serde(flatten)]
    pub totals: Counts,
    pub configs: Vec<ConfigReport>,
}

pub const DENOMINATORS: &str = "fp_rate = fp / feasible points, fn_rate = fn / violating points";

/// Draws `n` fresh samples per configuration with `seed` and classifies them.
pub fn evaluate(
    sol: &PlacementSolution,
    cases: &[ValidationCase<'_>],
    n: usize,
    seed: u64,
    opts: &SampleOptions,
) -> Result<ValidationReport, ValidateError> {
    if n == 0 {
        return Err(ValidateError::NoSamples);
    }
    let mut configs = Vec::with_capacity(cases.len());
    for c in cases {
        let thr = sol
            .for_config(c.name)
            .ok_or_else(|| ValidateError::MissingConfig(c.name.to_string()))?;
        let samples = draw_samples(c.net, c.range, n, seed, opts, c.name)?;
        configs.push(ConfigReport {
            config: c.name.to_string(),
            counts: counts(thr, c.net, &samples)?,
        });
    }
    let totals = configs.iter().fold(Counts::default(), |acc, c| acc.add(&c.counts));
    Ok(ValidationReport {
        seed,
        denominators: DENOMINATORS.into(),
        totals,
        configs,
    })
}

/// One column of the comparison table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableColumn {
    pub label: String,
    /// None marks a skipped run.
    pub seconds: Option<f64>,
    pub sensors: Vec<usize>,
    pub thresholds: Vec<String>,
    pub report: Option<Counts>,
    pub note: Option<String>,
}

/// Plain-text table with one column per run.
pub fn render_table(cols: &[TableColumn]) -> String {
    let dash = || "-".to_string();
    let mut rows: Vec<(String, Vec<String>)> = vec![
        ("".into(), cols.iter().map(|c| c.label.clone()).collect()),
        (
            "time (s)".into(),
            cols.iter()
                .map(|c| match (c.seconds, &c.note) {
                    (Some(s), _) => format!("{s:.2}"),
                    (None, Some(n)) => n.clone(),
                    (None, None) => dash(),
                })
                .collect(),
        ),
        (
            "sensors".into(),
            cols.iter()
                .map(|c| {
                    if c.seconds.is_none() {
                        dash()
                    } else if c.sensors.is_empty() {
                        "none".into()
                    } else {
                        c.sensors.iter().map(|b| b.to_string()).collect::<Vec<_>>().join(", ")
                    }
                })
                .collect(),
        ),
        (
            "thresholds".into(),
            cols.iter()
                .map(|c| if c.thresholds.is_empty() { dash() } else { c.thresholds.join(", ") })
                .collect(),
        ),
    ];
    let stat = |f: &dyn Fn(&Counts) -> String| cols.iter().map(|c| c.report.as_ref().map_or_else(dash, f)).collect();
    rows.push(("feasible points".into(), stat(&|r| r.n_feasible.to_string())));
    rows.push(("false positives %".into(), stat(&|r| format!("{:.2}", 100.0 * r.fp_rate))));
    rows.push(("false negatives %".into(), stat(&|r| format!("{:.2}", 100.0 * r.fn_rate))));

    let head = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols.len())
        .map(|k| rows.iter().map(|r| r.1[k].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (name, cells) in &rows {
        let _ = write!(out, "{name:<head$}");
        for (cell, w) in cells.iter().zip(&widths) {
            let _ = write!(out, " | {cell:<w$}");
        }
        out.push('\n');
    }
    out
}

/// Threshold strings of one configuration, e.g. `10: [0.9000, 1.0500]`.
pub fn threshold_strings(thr: &ConfigThresholds) -> Vec<String> {
    thr.sensors
        .iter()
        .map(|s| format!("{}: [{:.4}, {:.4}]", s.bus, s.lower, s.upper))
        .collect()
}
