//! Conservative linear approximations of bus voltage magnitudes.
//!
//! Each CLA is an affine function of the stacked (P; Q) injections that lies
//! on one side of the sampled voltages while minimizing the l1 gap. The fit
//! is solved through its LP dual, whose rows are the (a0, a1) coefficients
//! and whose columns are samples, so adding samples only appends columns and
//! the previous optimal basis stays primal feasible.

use std::time::Instant;

use lpcore::{Basis, LinearModel, LpSolver, LpStatus, Relation, Sense};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::powerflow::InjectionVector;
use crate::sampling::SampleSet;

/// Residual tolerance for one-sidedness checks.
pub const CONSERVATIVE_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ClaError {
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("bus {0} is not a PQ bus of the sample set")]
    UnknownBus(usize),
    #[error("regression LP for bus {bus} ({direction:?}) ended with status {status:?}")]
    Lp {
        bus: usize,
        direction: Direction,
        status: LpStatus,
    },
    #[error("sample sets disagree on the bus layout")]
    Layout,
    #[error(transparent)]
    Model(#[from] lpcore::ModelError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Over,
    Under,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutputKind {
    #[serde(rename = "V")]
    V,
    #[default]
    #[serde(rename = "V_squared")]
    VSquared,
}

impl OutputKind {
    pub fn of_voltage(self, v: f64) -> f64 {
        match self {
            OutputKind::V => v,
            OutputKind::VSquared => v * v,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingInfo {
    pub config: String,
    pub seeds: Vec<u64>,
    /// Samples in the final active training set.
    pub n_active: usize,
    pub rounds: usize,
    /// Extra samples still violating when the round budget ran out.
    pub remaining_violations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cla {
    pub bus: usize,
    pub direction: Direction,
    pub a0: f64,
    /// Coefficients over the stacked (P; Q) of all PQ buses.
    pub a1: Vec<f64>,
    pub output_kind: OutputKind,
    pub trained_on: TrainingInfo,
    /// Mean absolute residual on the active training set.
    pub mean_abs_error: f64,
}

impl Cla {
    /// Prediction in the output domain.
    pub fn raw(&self, x: &[f64]) -> f64 {
        self.a0 + self.a1.iter().zip(x).map(|(a, v)| a * v).sum::<f64>()
    }

    /// Signed residual that is nonnegative when conservative.
    pub fn margin(&self, x: &[f64], y: f64) -> f64 {
        match self.direction {
            Direction::Over => self.raw(x) - y,
            Direction::Under => y - self.raw(x),
        }
    }
}

/// Voltage-magnitude prediction; the flag reports a clamped negative V².
pub fn evaluate_flagged(cla: &Cla, inj: &InjectionVector) -> (f64, bool) {
    let x = inj.stacked();
    let r = cla.raw(&x);
    match cla.output_kind {
        OutputKind::V => (r, false),
        OutputKind::VSquared => {
            if r < 0.0 {
                (0.0, true)
            } else {
                (r.sqrt(), false)
            }
        }
    }
}

pub fn evaluate_cla(cla: &Cla, inj: &InjectionVector) -> f64 {
    evaluate_flagged(cla, inj).0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionOptions {
    pub top_k: usize,
    pub max_rounds: usize,
}

impl Default for SelectionOptions {
    fn default() -> Self {
        Self { top_k: 100, max_rounds: 5 }
    }
}

/// Training data for one bus: stacked inputs and outputs.
struct Data<'a> {
    xs: Vec<&'a [f64]>,
    ys: Vec<f64>,
}

/// Incremental dual-LP fitter over a growing set of samples.
struct Fitter {
    direction: Direction,
    dim: usize,
    free: Vec<usize>,
    mean: Vec<f64>,
    width: Vec<f64>,
    cols: Vec<(Vec<f64>, f64)>,
    basis: Option<Basis>,
}

impl Fitter {
    fn new(direction: Direction, dim: usize, all: &[&[f64]]) -> Self {
        // Coordinates that never vary carry no information and would make the
        // dual rows dependent.
        let mut free = Vec::new();
        let mut mean = Vec::new();
        let mut width = Vec::new();
        for k in 0..dim {
            let (lo, hi) = all
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), x| (l.min(x[k]), h.max(x[k])));
            if hi > lo {
                free.push(k);
                mean.push(all.iter().map(|x| x[k]).sum::<f64>() / all.len() as f64);
                width.push(hi - lo);
            }
        }
        Self {
            direction,
            dim,
            free,
            mean,
            width,
            cols: Vec::new(),
            basis: None,
        }
    }

    fn add(&mut self, x: &[f64], y: f64) {
        let z = self
            .free
            .iter()
            .enumerate()
            .map(|(t, &k)| (x[k] - self.mean[t]) / self.width[t])
            .collect();
        self.cols.push((z, y));
    }

    /// Returns (a0, a1) in original coordinates.
    fn solve(&mut self, bus: usize) -> Result<(f64, Vec<f64>), ClaError> {
        let nf = self.free.len();
        let n = self.cols.len();
        let mut m = LinearModel::new(format!("cla_{bus}"));
        let lam: Vec<_> = (0..n).map(|s| m.add_var(format!("l{s}"), 0.0, f64::INFINITY)).collect();
        m.add_constraint("a0", lam.iter().map(|&v| (v, 1.0)).collect(), Relation::Eq, n as f64);
        for t in 0..nf {
            let co = lam
                .iter()
                .zip(&self.cols)
                .filter(|(_, c)| c.0[t] != 0.0)
                .map(|(&v, c)| (v, c.0[t]))
                .collect();
            let rhs: f64 = self.cols.iter().map(|c| c.0[t]).sum();
            m.add_constraint(format!("a{t}"), co, Relation::Eq, rhs);
        }
        let sense = match self.direction {
            Direction::Over => Sense::Maximize,
            Direction::Under => Sense::Minimize,
        };
        m.set_objective(sense, lam.iter().zip(&self.cols).map(|(&v, c)| (v, c.1)).collect(), 0.0);
        let mut lp = LpSolver::new(&m)?;
        if let Some(b) = &self.basis {
            // Columns were appended: shift logical indices past the new ones.
            let old_n = b.at_upper.len() - (nf + 1);
            let added = n - old_n;
            let head = b.head.iter().map(|&j| if j < old_n { j } else { j + added }).collect();
            let mut at_upper = b.at_upper[..old_n].to_vec();
            at_upper.extend(std::iter::repeat(false).take(added));
            at_upper.extend_from_slice(&b.at_upper[old_n..]);
            lp.set_basis(&Basis { head, at_upper });
        }
        let st = lp.solve();
        if st != LpStatus::Optimal {
            return Err(ClaError::Lp {
                bus,
                direction: self.direction,
                status: st,
            });
        }
        self.basis = Some(lp.basis());
        let d = lp.row_duals();
        let mut a1 = vec![0.0; self.dim];
        let mut a0 = d[0];
        for (t, &k) in self.free.iter().enumerate() {
            a1[k] = d[t + 1] / self.width[t];
            a0 -= a1[k] * self.mean[t];
        }
        Ok((a0, a1))
    }
}

fn data_for<'a>(set: &'a SampleSet, stacked: &'a [Vec<f64>], bus: usize, kind: OutputKind) -> Result<Data<'a>, ClaError> {
    let c = set.column_of(bus).ok_or(ClaError::UnknownBus(bus))?;
    if !set.pq_ids.contains(&bus) {
        return Err(ClaError::UnknownBus(bus));
    }
    Ok(Data {
        xs: stacked.iter().map(|v| v.as_slice()).collect(),
        ys: set.solutions.iter().map(|s| kind.of_voltage(s.v[c])).collect(),
    })
}

fn stacked(set: &SampleSet) -> Vec<Vec<f64>> {
    set.injections.iter().map(|i| i.stacked()).collect()
}

/// Shifts the intercept so every active sample is on the conservative side
/// exactly, absorbing rounding from the coordinate scaling.
fn make_conservative(a0: &mut f64, a1: &[f64], dir: Direction, xs: &[&[f64]], ys: &[f64]) {
    let worst = xs
        .iter()
        .zip(ys)
        .map(|(x, &y)| {
            let p = *a0 + a1.iter().zip(x.iter()).map(|(a, v)| a * v).sum::<f64>();
            match dir {
                Direction::Over => p - y,
                Direction::Under => y - p,
            }
        })
        .fold(f64::INFINITY, f64::min);
    if worst < 0.0 {
        match dir {
            Direction::Over => *a0 -= worst,
            Direction::Under => *a0 += worst,
        }
    }
}

fn mean_abs(a0: f64, a1: &[f64], xs: &[&[f64]], ys: &[f64]) -> f64 {
    xs.iter()
        .zip(ys)
        .map(|(x, &y)| (a0 + a1.iter().zip(x.iter()).map(|(a, v)| a * v).sum::<f64>() - y).abs())
        .sum::<f64>()
        / ys.len() as f64
}

/// Exact l1 fit on `samples` alone.
pub fn fit_cla(samples: &SampleSet, bus: usize, direction: Direction, kind: OutputKind) -> Result<Cla, ClaError> {
    fit_with_selection(samples, None, bus, direction, kind, &SelectionOptions::default())
}

/// Fit on `train`, then repeatedly add extras that violate the current fit
/// together with the `top_k` largest-residual extras, and refit.
pub fn fit_with_selection(
    train: &SampleSet,
    extra: Option<&SampleSet>,
    bus: usize,
    direction: Direction,
    kind: OutputKind,
    sel: &SelectionOptions,
) -> Result<Cla, ClaError> {
    if train.len() < 2 {
        return Err(ClaError::TooFewSamples(train.len()));
    }
    if let Some(e) = extra {
        if e.bus_ids != train.bus_ids || e.pq_ids != train.pq_ids {
            return Err(ClaError::Layout);
        }
    }
    let xt = stacked(train);
    let dt = data_for(train, &xt, bus, kind)?;
    let xe = extra.map(stacked).unwrap_or_default();
    let de = match extra {
        Some(e) => data_for(e, &xe, bus, kind)?,
        None => Data { xs: Vec::new(), ys: Vec::new() },
    };
    let dim = 2 * train.pq_ids.len();
    let mut all: Vec<&[f64]> = dt.xs.clone();
    all.extend(de.xs.iter().copied());
    let mut f = Fitter::new(direction, dim, &all);
    let mut act_x: Vec<&[f64]> = Vec::new();
    let mut act_y: Vec<f64> = Vec::new();
    for (x, &y) in dt.xs.iter().zip(&dt.ys) {
        f.add(x, y);
        act_x.push(x);
        act_y.push(y);
    }
    let (mut a0, mut a1) = f.solve(bus)?;
    make_conservative(&mut a0, &a1, direction, &act_x, &act_y);
    let mut used = vec![false; de.ys.len()];
    let mut rounds = 0;
    let mut remaining = 0;
    while !de.ys.is_empty() {
        let margins: Vec<f64> = de
            .xs
            .iter()
            .zip(&de.ys)
            .map(|(x, &y)| {
                let p = a0 + a1.iter().zip(x.iter()).map(|(a, v)| a * v).sum::<f64>();
                match direction {
                    Direction::Over => p - y,
                    Direction::Under => y - p,
                }
            })
            .collect();
        let viol: Vec<usize> = (0..margins.len()).filter(|&s| margins[s] < -CONSERVATIVE_TOL).collect();
        remaining = viol.len();
        if viol.is_empty() || rounds >= sel.max_rounds {
            break;
        }
        let mut order: Vec<usize> = (0..margins.len()).filter(|&s| !used[s]).collect();
        order.sort_by(|&p, &q| margins[q].abs().total_cmp(&margins[p].abs()).then(p.cmp(&q)));
        let mut pick: Vec<usize> = viol.into_iter().filter(|&s| !used[s]).collect();
        pick.extend(order.into_iter().take(sel.top_k));
        pick.sort_unstable();
        pick.dedup();
        for &s in &pick {
            used[s] = true;
            f.add(de.xs[s], de.ys[s]);
            act_x.push(de.xs[s]);
            act_y.push(de.ys[s]);
        }
        let (b0, b1) = f.solve(bus)?;
        a0 = b0;
        a1 = b1;
        make_conservative(&mut a0, &a1, direction, &act_x, &act_y);
        rounds += 1;
    }
    let mut seeds = vec![train.seed];
    if let Some(e) = extra {
        seeds.push(e.seed);
    }
    Ok(Cla {
        bus,
        direction,
        mean_abs_error: mean_abs(a0, &a1, &act_x, &act_y),
        a0,
        a1,
        output_kind: kind,
        trained_on: TrainingInfo {
            config: train.config.clone(),
            seeds,
            n_active: act_y.len(),
            rounds,
            remaining_violations: remaining,
        },
    })
}

/// Refines an existing fit; `train` must be the set `cla` was fitted on.
pub fn refine_with_selection(
    cla: &Cla,
    train: &SampleSet,
    extra: &SampleSet,
    top_k: usize,
    max_rounds: usize,
) -> Result<Cla, ClaError> {
    let xe = stacked(extra);
    let de = data_for(extra, &xe, cla.bus, cla.output_kind)?;
    let ok = de.xs.iter().zip(&de.ys).all(|(x, &y)| cla.margin(x, y) >= -CONSERVATIVE_TOL);
    if ok {
        return Ok(cla.clone());
    }
    fit_with_selection(
        train,
        Some(extra),
        cla.bus,
        cla.direction,
        cla.output_kind,
        &SelectionOptions { top_k, max_rounds },
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClaPair {
    pub over: Cla,
    pub under: Cla,
}

/// Over and under CLAs for every PQ bus of one configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClaBundle {
    pub config: String,
    pub output_kind: OutputKind,
    pub pq_ids: Vec<usize>,
    pub pairs: Vec<ClaPair>,
    pub selection: SelectionOptions,
    pub selection_rule: String,
    pub fit_seconds: f64,
}

impl ClaBundle {
    pub fn pair(&self, bus: usize) -> Option<&ClaPair> {
        self.pq_ids.iter().position(|&b| b == bus).map(|k| &self.pairs[k])
    }

    pub fn dim(&self) -> usize {
        2 * self.pq_ids.len()
    }
}

/// Fits all over/under CLAs of a configuration in parallel.
pub fn fit_bundle(
    train: &SampleSet,
    extra: Option<&SampleSet>,
    kind: OutputKind,
    sel: &SelectionOptions,
) -> Result<ClaBundle, ClaError> {
    let t0 = Instant::now();
    let jobs: Vec<(usize, Direction)> = train
        .pq_ids
        .iter()
        .flat_map(|&b| [(b, Direction::Over), (b, Direction::Under)])
        .collect();
    let fits: Vec<Cla> = jobs
        .par_iter()
        .map(|&(b, d)| fit_with_selection(train, extra, b, d, kind, sel))
        .collect::<Result<_, _>>()?;
    let mut it = fits.into_iter();
    let mut pairs = Vec::new();
    while let (Some(over), Some(under)) = (it.next(), it.next()) {
        pairs.push(ClaPair { over, under });
    }
    Ok(ClaBundle {
        config: train.config.clone(),
        output_kind: kind,
        pq_ids: train.pq_ids.clone(),
        pairs,
        selection: *sel,
        selection_rule: "violators plus top_k largest |residual| extras per round, ties by sample index".into(),
        fit_seconds: t0.elapsed().as_secs_f64(),
    })
}

/// Share of samples on the conservative side, per PQ bus (over, under).
pub fn conservativeness(bundle: &ClaBundle, set: &SampleSet) -> Vec<(f64, f64)> {
    let xs = stacked(set);
    bundle
        .pq_ids
        .iter()
        .zip(&bundle.pairs)
        .map(|(&b, p)| {
            let c = set.column_of(b).unwrap();
            let mut ok = (0usize, 0usize);
            for (x, s) in xs.iter().zip(&set.solutions) {
                let y = bundle.output_kind.of_voltage(s.v[c]);
                if p.over.margin(x, y) >= -CONSERVATIVE_TOL {
                    ok.0 += 1;
                }
                if p.under.margin(x, y) >= -CONSERVATIVE_TOL {
                    ok.1 += 1;
                }
            }
            let n = set.len() as f64;
            (ok.0 as f64 / n, ok.1 as f64 / n)
        })
        .collect()
}
