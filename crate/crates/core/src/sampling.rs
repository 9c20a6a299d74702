//! Injection uncertainty boxes and reproducible Monte Carlo power-flow samples.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netmodel::Network;
use crate::powerflow::{network_curves, InjectionVector, PfError, PfModel, PfOptions, PfSolution};

#[derive(Debug, Error)]
pub enum SampleError {
    #[error("override references unknown bus {0}")]
    UnknownBus(usize),
    #[error("bus {bus}: lower fraction {lo} exceeds upper fraction {hi}")]
    Fractions { bus: usize, lo: f64, hi: f64 },
    #[error("invalid injection range: {0}")]
    Range(String),
    #[error("power flow did not converge for sample(s) {indices:?}")]
    NonConvergence { indices: Vec<usize> },
    #[error(transparent)]
    Pf(#[from] PfError),
    #[error("sample file: {0}")]
    Format(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Per-PQ-bus injection bounds, in network PQ order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InjectionRange {
    pub p_min: Vec<f64>,
    pub p_max: Vec<f64>,
    pub q_min: Vec<f64>,
    pub q_max: Vec<f64>,
}

impl InjectionRange {
    pub fn len(&self) -> usize {
        self.p_min.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p_min.is_empty()
    }

    pub fn validate(&self) -> Result<(), SampleError> {
        let n = self.p_min.len();
        if self.p_max.len() != n || self.q_min.len() != n || self.q_max.len() != n {
            return Err(SampleError::Range("bound vectors differ in length".into()));
        }
        for k in 0..n {
            let ok = self.p_min[k] <= self.p_max[k] && self.q_min[k] <= self.q_max[k];
            let fin = [self.p_min[k], self.p_max[k], self.q_min[k], self.q_max[k]]
                .iter()
                .all(|v| v.is_finite());
            if !ok || !fin {
                return Err(SampleError::Range(format!("bounds at PQ position {k} are not ordered finite values")));
            }
        }
        Ok(())
    }

    /// Stacked (P; Q) lower corner.
    pub fn lower(&self) -> Vec<f64> {
        let mut x = self.p_min.clone();
        x.extend_from_slice(&self.q_min);
        x
    }

    pub fn upper(&self) -> Vec<f64> {
        let mut x = self.p_max.clone();
        x.extend_from_slice(&self.q_max);
        x
    }

    pub fn contains(&self, inj: &InjectionVector) -> bool {
        (0..self.len()).all(|k| {
            (self.p_min[k]..=self.p_max[k]).contains(&inj.p[k]) && (self.q_min[k]..=self.q_max[k]).contains(&inj.q[k])
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RangeTarget {
    Active,
    Reactive,
    #[default]
    Both,
}

/// Replaces the scaling fractions at one bus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeOverride {
    pub bus: usize,
    pub lo: f64,
    pub hi: f64,
    #[serde(default)]
    pub target: RangeTarget,
}

fn scaled(nom: f64, lo: f64, hi: f64) -> (f64, f64) {
    let (a, b) = (lo * nom, hi * nom);
    (a.min(b), a.max(b))
}

/// Box of `[lo, hi] x nominal` at every PQ bus, with per-bus overrides.
pub fn range_from_fractions(
    net: &Network,
    lo: f64,
    hi: f64,
    overrides: &[RangeOverride],
) -> Result<InjectionRange, SampleError> {
    if lo > hi {
        return Err(SampleError::Fractions { bus: 0, lo, hi });
    }
    let pq = net.pq_indices();
    let mut r = InjectionRange {
        p_min: Vec::new(),
        p_max: Vec::new(),
        q_min: Vec::new(),
        q_max: Vec::new(),
    };
    for &i in &pq {
        let b = &net.buses[i];
        let (pl, ph) = scaled(b.p_nom, lo, hi);
        let (ql, qh) = scaled(b.q_nom, lo, hi);
        r.p_min.push(pl);
        r.p_max.push(ph);
        r.q_min.push(ql);
        r.q_max.push(qh);
    }
    for o in overrides {
        let k = pq
            .iter()
            .position(|&i| net.buses[i].id == o.bus)
            .ok_or(SampleError::UnknownBus(o.bus))?;
        if o.lo > o.hi {
            return Err(SampleError::Fractions { bus: o.bus, lo: o.lo, hi: o.hi });
        }
        let b = &net.buses[pq[k]];
        if o.target != RangeTarget::Reactive {
            (r.p_min[k], r.p_max[k]) = scaled(b.p_nom, o.lo, o.hi);
        }
        if o.target != RangeTarget::Active {
            (r.q_min[k], r.q_max[k]) = scaled(b.q_nom, o.lo, o.hi);
        }
    }
    Ok(r)
}

/// Solved Monte Carlo draws for one configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    pub seed: u64,
    pub config: String,
    /// External ids of all buses (voltage column order).
    pub bus_ids: Vec<usize>,
    /// External ids of the PQ buses (injection order).
    pub pq_ids: Vec<usize>,
    pub injections: Vec<InjectionVector>,
    pub solutions: Vec<PfSolution>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleOptions {
    pub pf: PfOptions,
    /// Use the volt-VAR curves attached to the network's buses.
    pub voltvar: bool,
}

impl Default for SampleOptions {
    fn default() -> Self {
        Self {
            pf: PfOptions::default(),
            voltvar: true,
        }
    }
}

/// Uniform draw `index` of the stream identified by `seed`.
pub fn draw_injection(range: &InjectionRange, seed: u64, index: usize) -> InjectionVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let mut one = |lo: f64, hi: f64| {
        let u: f64 = rng.gen();
        if hi > lo {
            (lo + (hi - lo) * u).min(hi)
        } else {
            lo
        }
    };
    let n = range.len();
    let p = (0..n).map(|k| one(range.p_min[k], range.p_max[k])).collect();
    let q = (0..n).map(|k| one(range.q_min[k], range.q_max[k])).collect();
    InjectionVector { p, q }
}

pub fn draw_samples(
    net: &Network,
    range: &InjectionRange,
    n: usize,
    seed: u64,
    opts: &SampleOptions,
    config: &str,
) -> Result<SampleSet, SampleError> {
    if n == 0 {
        return Err(SampleError::Range("sample count must be at least 1".into()));
    }
    range.validate()?;
    let model = PfModel::new(net);
    if range.len() != model.num_pq() {
        return Err(SampleError::Range(format!(
            "range covers {} buses, network has {} PQ buses",
            range.len(),
            model.num_pq()
        )));
    }
    let curves = if opts.voltvar { network_curves(net) } else { vec![None; model.num_pq()] };
    let res: Vec<Result<(InjectionVector, PfSolution), PfError>> = (0..n)
        .into_par_iter()
        .map(|k| {
            let inj = draw_injection(range, seed, k);
            let sol = model.solve_voltvar(&inj, &curves, &opts.pf)?;
            Ok((inj, sol))
        })
        .collect();
    let mut injections = Vec::with_capacity(n);
    let mut solutions = Vec::with_capacity(n);
    let mut bad = Vec::new();
    for (k, r) in res.into_iter().enumerate() {
        let (inj, sol) = r?;
        if !sol.converged {
            bad.push(k);
        }
        injections.push(inj);
        solutions.push(sol);
    }
    if !bad.is_empty() {
        return Err(SampleError::NonConvergence { indices: bad });
    }
    Ok(SampleSet {
        seed,
        config: config.to_string(),
        bus_ids: net.buses.iter().map(|b| b.id).collect(),
        pq_ids: net.pq_ids(),
        injections,
        solutions,
    })
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.injections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.injections.is_empty()
    }

    /// Column in `bus_ids` of an external bus id.
    pub fn column_of(&self, id: usize) -> Option<usize> {
        self.bus_ids.iter().position(|&b| b == id)
    }

    /// Voltages at bus `id` across samples.
    pub fn voltages_at(&self, id: usize) -> Vec<f64> {
        let c = self.column_of(id).expect("bus present in sample set");
        self.solutions.iter().map(|s| s.v[c]).collect()
    }

    /// Minimum and maximum sampled voltage at every PQ bus, in PQ order.
    pub fn pq_extremes(&self) -> Vec<(f64, f64)> {
        self.pq_ids
            .iter()
            .map(|&id| {
                let c = self.column_of(id).unwrap();
                self.solutions
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| (lo.min(s.v[c]), hi.max(s.v[c])))
            })
            .collect()
    }

    /// Concatenation of two sets drawn on the same network.
    pub fn concat(&self, other: &SampleSet) -> SampleSet {
        assert_eq!(self.bus_ids, other.bus_ids);
        let mut out = self.clone();
        out.injections.extend_from_slice(&other.injections);
        out.solutions.extend_from_slice(&other.solutions);
        out
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), SampleError> {
        let mut wr = csv::Writer::from_writer(w);
        let mut head: Vec<String> = Vec::new();
        head.extend(self.pq_ids.iter().map(|i| format!("p_{i}")));
        head.extend(self.pq_ids.iter().map(|i| format!("q_{i}")));
        head.extend(self.bus_ids.iter().map(|i| format!("v_{i}")));
        head.extend(self.bus_ids.iter().map(|i| format!("theta_{i}")));
        head.push("iterations".into());
        head.push("max_mismatch".into());
        wr.write_record(&head)?;
        for (inj, sol) in self.injections.iter().zip(&self.solutions) {
            let mut rec: Vec<String> = Vec::with_capacity(head.len());
            rec.extend(inj.p.iter().chain(&inj.q).map(|v| v.to_string()));
            rec.extend(sol.v.iter().chain(&sol.theta).map(|v| v.to_string()));
            rec.push(sol.iterations.to_string());
            rec.push(sol.max_mismatch.to_string());
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R, meta: &SampleMeta) -> Result<SampleSet, SampleError> {
        let mut rd = csv::Reader::from_reader(r);
        let head = rd.headers()?.clone();
        let npq = head.iter().filter(|h| h.starts_with("p_")).count();
        let nb = head.iter().filter(|h| h.starts_with("v_")).count();
        let ids = |prefix: &str, off: usize, len: usize| -> Result<Vec<usize>, SampleError> {
            (off..off + len)
                .map(|c| {
                    head.get(c)
                        .and_then(|h| h.strip_prefix(prefix))
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| SampleError::Format(format!("unexpected header at column {}", c + 1)))
                })
                .collect()
        };
        let pq_ids = ids("p_", 0, npq)?;
        let bus_ids = ids("v_", 2 * npq, nb)?;
        if head.len() != 2 * npq + 2 * nb + 2 {
            return Err(SampleError::Format("column count does not match header layout".into()));
        }
        let mut injections = Vec::new();
        let mut solutions = Vec::new();
        for (line, rec) in rd.records().enumerate() {
            let rec = rec?;
            let vals: Vec<f64> = rec
                .iter()
                .map(|s| s.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| SampleError::Format(format!("non-numeric value in data row {}", line + 1)))?;
            injections.push(InjectionVector {
                p: vals[..npq].to_vec(),
                q: vals[npq..2 * npq].to_vec(),
            });
            let o = 2 * npq;
            solutions.push(PfSolution {
                v: vals[o..o + nb].to_vec(),
                theta: vals[o + nb..o + 2 * nb].to_vec(),
                iterations: vals[o + 2 * nb] as usize,
                converged: true,
                max_mismatch: vals[o + 2 * nb + 1],
            });
        }
        Ok(SampleSet {
            seed: meta.seed,
            config: meta.config.clone(),
            bus_ids,
            pq_ids,
            injections,
            solutions,
        })
    }

    pub fn meta(&self, range: &InjectionRange, opts: &SampleOptions) -> SampleMeta {
        SampleMeta {
            seed: self.seed,
            config: self.config.clone(),
            n: self.len(),
            distribution: "uniform".into(),
            generator: "chacha8, stream = sample index".into(),
            range: range.clone(),
            options: *opts,
        }
    }
}

/// JSON sidecar describing how a sample CSV was produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub seed: u64,
    pub config: String,
    pub n: usize,
    pub distribution: String,
    pub generator: String,
    pub range: InjectionRange,
    pub options: SampleOptions,
}
