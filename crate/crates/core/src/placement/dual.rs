//! Explicit dual data of the lower-level problems and the certification audit.

use lpcore::{solve_lp, LinearModel, Relation, Sense, Status};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{BusCertificate, ConfigAudit, ConfigInput, PlacementError, PlacementSolution};
use crate::cla::{ClaBundle, OutputKind};
use crate::sampling::InjectionRange;

/// Meaning of one dual column (one primal inequality).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DualColumn {
    /// -x_k >= -x_max,k
    InjectionUpper(usize),
    /// x_k >= x_min,k
    InjectionLower(usize),
    /// over_j(x) >= lower threshold of bus j
    SensorLower(usize),
    /// -under_j(x) >= -upper threshold of bus j
    SensorUpper(usize),
}

/// Lower-level problems of one configuration in the form
/// `max b'y + a_{i,0}  s.t.  A y = a_{i,1}, y >= 0` (and its mirror for the
/// upper estimate), with `b = b_const + [0, 0, U_lower, -U_upper]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualData {
    pub config: String,
    pub pq_ids: Vec<usize>,
    pub output_kind: OutputKind,
    /// Dense K x (2K + 2n) matrix, K = 2n.
    pub a: Vec<Vec<f64>>,
    pub b_const: Vec<f64>,
    pub columns: Vec<DualColumn>,
    pub under: Vec<(f64, Vec<f64>)>,
    pub over: Vec<(f64, Vec<f64>)>,
    pub x_min: Vec<f64>,
    pub x_max: Vec<f64>,
    /// Translated value of an absent upper threshold.
    pub absent_upper: f64,
}

pub fn build_dual_data(bundle: &ClaBundle, range: &InjectionRange, big_m: f64) -> Result<DualData, PlacementError> {
    let n = bundle.pq_ids.len();
    let k = 2 * n;
    let bad = |msg: &str| PlacementError::Layout {
        config: bundle.config.clone(),
        msg: msg.to_string(),
    };
    if range.len() != n || bundle.pairs.len() != n {
        return Err(bad("range and bundle sizes differ"));
    }
    if bundle.pairs.iter().any(|p| p.over.a1.len() != k || p.under.a1.len() != k) {
        return Err(bad("CLA coefficient vectors do not match the injection dimension"));
    }
    let x_min = range.lower();
    let x_max = range.upper();
    let mut columns = Vec::with_capacity(2 * k + 2 * n);
    let mut b_const = Vec::with_capacity(2 * k + 2 * n);
    let mut a = vec![vec![0.0; 2 * k + 2 * n]; k];
    for c in 0..k {
        a[c][c] = -1.0;
        columns.push(DualColumn::InjectionUpper(c));
        b_const.push(-x_max[c]);
    }
    for c in 0..k {
        a[c][k + c] = 1.0;
        columns.push(DualColumn::InjectionLower(c));
        b_const.push(x_min[c]);
    }
    for j in 0..n {
        for c in 0..k {
            a[c][2 * k + j] = bundle.pairs[j].over.a1[c];
        }
        columns.push(DualColumn::SensorLower(j));
        b_const.push(-bundle.pairs[j].over.a0);
    }
    for j in 0..n {
        for c in 0..k {
            a[c][2 * k + n + j] = -bundle.pairs[j].under.a1[c];
        }
        columns.push(DualColumn::SensorUpper(j));
        b_const.push(bundle.pairs[j].under.a0);
    }
    Ok(DualData {
        config: bundle.config.clone(),
        pq_ids: bundle.pq_ids.clone(),
        output_kind: bundle.output_kind,
        a,
        b_const,
        columns,
        under: bundle.pairs.iter().map(|p| (p.under.a0, p.under.a1.clone())).collect(),
        over: bundle.pairs.iter().map(|p| (p.over.a0, p.over.a1.clone())).collect(),
        x_min,
        x_max,
        absent_upper: bundle.output_kind.of_voltage(big_m),
    })
}

impl DualData {
    pub fn n(&self) -> usize {
        self.pq_ids.len()
    }

    /// Full b for translated thresholds (output domain, one per PQ bus).
    pub fn b_vector(&self, lower: &[f64], upper: &[f64]) -> Vec<f64> {
        let n = self.n();
        let k = 2 * n;
        let mut b = self.b_const.clone();
        for j in 0..n {
            b[2 * k + j] += lower[j];
            b[2 * k + n + j] -= upper[j];
        }
        b
    }

    /// Translated thresholds for a set of sensors `(bus index, lower, upper)` in V.
    pub fn translated(&self, sensors: &[(usize, f64, f64)]) -> (Vec<f64>, Vec<f64>) {
        let n = self.n();
        let mut lo = vec![0.0; n];
        let mut hi = vec![self.absent_upper; n];
        for &(j, l, u) in sensors {
            lo[j] = self.output_kind.of_voltage(l);
            hi[j] = self.output_kind.of_voltage(u);
        }
        (lo, hi)
    }

    fn solve_dual(&self, i: usize, lower: &[f64], upper: &[f64], upper_side: bool) -> Result<f64, PlacementError> {
        let b = self.b_vector(lower, upper);
        let cols = b.len();
        let mut m = LinearModel::new("dual");
        let y: Vec<_> = (0..cols)
            .map(|c| {
                if upper_side {
                    m.add_var(format!("y{c}"), f64::NEG_INFINITY, 0.0)
                } else {
                    m.add_var(format!("y{c}"), 0.0, f64::INFINITY)
                }
            })
            .collect();
        let (a0, a1) = if upper_side { &self.over[i] } else { &self.under[i] };
        for (r, row) in self.a.iter().enumerate() {
            let co = row.iter().zip(&y).filter(|p| *p.0 != 0.0).map(|(&v, &yv)| (yv, v)).collect();
            m.add_constraint(format!("a{r}"), co, Relation::Eq, a1[r]);
        }
        let sense = if upper_side { Sense::Minimize } else { Sense::Maximize };
        m.set_objective(sense, y.iter().zip(&b).map(|(&v, &c)| (v, c)).collect(), *a0);
        let r = solve_lp(&m)?;
        match r.status {
            Status::Optimal => Ok(r.objective),
            Status::Unbounded if upper_side => Ok(f64::NEG_INFINITY),
            Status::Unbounded => Ok(f64::INFINITY),
            status => Err(self.lp_err(i, status)),
        }
    }

    fn lp_err(&self, i: usize, status: Status) -> PlacementError {
        PlacementError::Lp {
            config: self.config.clone(),
            bus: self.pq_ids[i],
            status,
        }
    }

    /// Dual optimum of the lower estimate of bus i; +inf when the primal is infeasible.
    pub fn lower_dual(&self, i: usize, lower: &[f64], upper: &[f64]) -> Result<f64, PlacementError> {
        self.solve_dual(i, lower, upper, false)
    }

    /// Dual optimum of the upper estimate of bus i; -inf when the primal is infeasible.
    pub fn upper_dual(&self, i: usize, lower: &[f64], upper: &[f64]) -> Result<f64, PlacementError> {
        self.solve_dual(i, lower, upper, true)
    }

    fn solve_primal(&self, i: usize, lower: &[f64], upper: &[f64], upper_side: bool) -> Result<f64, PlacementError> {
        let n = self.n();
        let mut m = LinearModel::new("primal");
        let x: Vec<_> = (0..2 * n).map(|c| m.add_var(format!("x{c}"), self.x_min[c], self.x_max[c])).collect();
        for j in 0..n {
            let (o0, o1) = &self.over[j];
            let co = x.iter().zip(o1).filter(|p| *p.1 != 0.0).map(|(&v, &a)| (v, a)).collect();
            m.add_constraint(format!("lo{j}"), co, Relation::Ge, lower[j] - o0);
            let (u0, u1) = &self.under[j];
            let co = x.iter().zip(u1).filter(|p| *p.1 != 0.0).map(|(&v, &a)| (v, a)).collect();
            m.add_constraint(format!("hi{j}"), co, Relation::Le, upper[j] - u0);
        }
        let (a0, a1) = if upper_side { &self.over[i] } else { &self.under[i] };
        let sense = if upper_side { Sense::Maximize } else { Sense::Minimize };
        m.set_objective(sense, x.iter().zip(a1).map(|(&v, &c)| (v, c)).collect(), *a0);
        let r = solve_lp(&m)?;
        match r.status {
            Status::Optimal => Ok(r.objective),
            Status::Infeasible if upper_side => Ok(f64::NEG_INFINITY),
            Status::Infeasible => Ok(f64::INFINITY),
            status => Err(self.lp_err(i, status)),
        }
    }

    /// Direct primal: min under_i(x) over the box and all sensor rows.
    pub fn lower_primal(&self, i: usize, lower: &[f64], upper: &[f64]) -> Result<f64, PlacementError> {
        self.solve_primal(i, lower, upper, false)
    }

    /// Direct primal: max over_i(x) over the box and all sensor rows.
    pub fn upper_primal(&self, i: usize, lower: &[f64], upper: &[f64]) -> Result<f64, PlacementError> {
        self.solve_primal(i, lower, upper, true)
    }
}

fn to_v(kind: OutputKind, y: f64) -> f64 {
    match kind {
        OutputKind::V => y,
        OutputKind::VSquared => {
            if y.is_infinite() {
                y
            } else {
                y.max(0.0).sqrt()
            }
        }
    }
}

/// Audit tolerance in the output domain.
pub const AUDIT_TOL: f64 = 1e-6;

/// Recomputes the certified range of every PQ bus by direct per-bus LPs
/// over the box and all sensor rows. A sensor at the bus itself certifies
/// its own threshold.
pub fn audit_solution(
    sol: &PlacementSolution,
    configs: &[ConfigInput],
    big_m: f64,
) -> Result<Vec<ConfigAudit>, PlacementError> {
    configs
        .iter()
        .map(|c| {
            let dd = build_dual_data(&c.bundle, &c.range, big_m)?;
            let thr = sol.for_config(&c.name).ok_or_else(|| PlacementError::Layout {
                config: c.name.clone(),
                msg: "solution has no thresholds for this configuration".into(),
            })?;
            let mut sensors = Vec::new();
            for s in &thr.sensors {
                let j = dd.pq_ids.iter().position(|&b| b == s.bus).ok_or_else(|| PlacementError::Layout {
                    config: c.name.clone(),
                    msg: format!("sensor bus {} is not a PQ bus", s.bus),
                })?;
                sensors.push((j, s.lower, s.upper));
            }
            let (lo, hi) = dd.translated(&sensors);
            let kind = dd.output_kind;
            let buses = (0..dd.n())
                .into_par_iter()
                .map(|i| {
                    let mut l = dd.lower_primal(i, &lo, &hi)?;
                    let mut u = dd.upper_primal(i, &lo, &hi)?;
                    if let Some(&(_, sl, su)) = sensors.iter().find(|s| s.0 == i) {
                        l = l.max(kind.of_voltage(sl));
                        u = u.min(kind.of_voltage(su));
                    }
                    let (vmin, vmax) = c.limits[i];
                    let ok = l >= kind.of_voltage(vmin) - AUDIT_TOL && u <= kind.of_voltage(vmax) + AUDIT_TOL;
                    Ok(BusCertificate {
                        bus: dd.pq_ids[i],
                        lower_bound: to_v(kind, l).min(big_m),
                        upper_bound: to_v(kind, u).max(0.0),
                        v_min: vmin,
                        v_max: vmax,
                        ok,
                    })
                })
                .collect::<Result<Vec<_>, PlacementError>>()?;
            Ok(ConfigAudit {
                config: c.name.clone(),
                buses,
            })
        })
        .collect()
}
