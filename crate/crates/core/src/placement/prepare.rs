//! Per-configuration data in shifted coordinates z = x - x_min, z in [0, w].

use lpcore::{solve_lp, LinearModel, Relation, Sense, Status};

use super::{ConfigInput, PlacementError, PlacementOptions};
use crate::cla::OutputKind;

/// Which side of the voltage band a lower-level problem certifies.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Side {
    Lower,
    Upper,
}

impl Side {
    pub fn tag(self) -> &'static str {
        match self {
            Side::Lower => "lo",
            Side::Upper => "hi",
        }
    }
}

pub(crate) struct Prepared {
    pub name: String,
    pub kind: OutputKind,
    pub ids: Vec<usize>,
    pub n: usize,
    pub width: Vec<f64>,
    /// Under-estimator coefficients and value at x_min, per bus.
    pub ua1: Vec<Vec<f64>>,
    pub cu: Vec<f64>,
    pub oa1: Vec<Vec<f64>>,
    pub co: Vec<f64>,
    pub vmin: Vec<f64>,
    pub vmax: Vec<f64>,
    pub eps: f64,
    /// Threshold slots available per bus (slot t sits t·ε inside the limit).
    pub lo_slots: Vec<usize>,
    pub hi_slots: Vec<usize>,
    pub risk_lo: Vec<usize>,
    pub risk_hi: Vec<usize>,
}

/// Outcome of a reduced lower-level LP, in the output domain.
pub(crate) enum LpValue {
    Finite(f64),
    /// No injection is consistent with the sensor readings.
    Vacuous,
}

impl LpValue {
    pub fn lower_ok(&self, limit: f64, tol: f64) -> bool {
        match *self {
            LpValue::Finite(v) => v >= limit - tol,
            LpValue::Vacuous => true,
        }
    }

    pub fn upper_ok(&self, limit: f64, tol: f64) -> bool {
        match *self {
            LpValue::Finite(v) => v <= limit + tol,
            LpValue::Vacuous => true,
        }
    }
}

impl Prepared {
    pub fn new(c: &ConfigInput, o: &PlacementOptions, eps: f64, extra_lo: &[usize], extra_hi: &[usize]) -> Self {
        let n = c.bundle.pq_ids.len();
        let xmin = c.range.lower();
        let xmax = c.range.upper();
        let width: Vec<f64> = xmin.iter().zip(&xmax).map(|(a, b)| b - a).collect();
        let at = |a0: f64, a1: &[f64]| a0 + a1.iter().zip(&xmin).map(|(a, x)| a * x).sum::<f64>();
        let ua1: Vec<Vec<f64>> = c.bundle.pairs.iter().map(|p| p.under.a1.clone()).collect();
        let oa1: Vec<Vec<f64>> = c.bundle.pairs.iter().map(|p| p.over.a1.clone()).collect();
        let cu = c.bundle.pairs.iter().map(|p| at(p.under.a0, &p.under.a1)).collect();
        let co = c.bundle.pairs.iter().map(|p| at(p.over.a0, &p.over.a1)).collect();
        let vmin: Vec<f64> = c.limits.iter().map(|l| l.0).collect();
        let vmax: Vec<f64> = c.limits.iter().map(|l| l.1).collect();
        let steps = ((o.steps - 1) as f64 * o.epsilon / eps).round() as usize + 1;
        let span = (steps - 1) as f64 * eps;
        let margin = o.margin();
        let mut p = Prepared {
            name: c.name.clone(),
            kind: c.kind(),
            ids: c.bundle.pq_ids.clone(),
            n,
            width,
            ua1,
            cu,
            oa1,
            co,
            vmin,
            vmax,
            eps,
            lo_slots: vec![steps; n],
            hi_slots: vec![steps; n],
            risk_lo: Vec::new(),
            risk_hi: Vec::new(),
        };
        for j in 0..n {
            let (smin, smax) = c.extremes[j];
            // Slots must stay inside the band and below the over-estimator's
            // reach, otherwise the sensor would alarm for every injection.
            let band = ((p.vmax[j] - p.vmin[j]) / eps + 1e-9).floor() as usize + 1;
            let omax = p.over_max(j);
            let reach = (0..steps).take_while(|&t| p.g(p.vmin[j] + t as f64 * eps) <= omax - 1e-9).count().max(1);
            p.lo_slots[j] = steps.min(band).min(reach);
            let umin = p.under_min(j);
            let reach_hi = (0..steps).take_while(|&t| p.g(p.vmax[j] - t as f64 * eps) >= umin + 1e-9).count().max(1);
            p.hi_slots[j] = steps.min(band).min(reach_hi);
            if o.bvr {
                if smin > p.vmin[j] + span {
                    p.lo_slots[j] = 1;
                }
                if smax < p.vmax[j] - span {
                    p.hi_slots[j] = 1;
                }
            }
            if smin < p.vmin[j] + margin || extra_lo.contains(&j) {
                p.risk_lo.push(j);
            }
            if smax > p.vmax[j] - margin || extra_hi.contains(&j) {
                p.risk_hi.push(j);
            }
        }
        p
    }

    pub fn g(&self, v: f64) -> f64 {
        self.kind.of_voltage(v)
    }

    pub fn g_inv(&self, y: f64) -> f64 {
        match self.kind {
            OutputKind::V => y,
            OutputKind::VSquared => y.max(0.0).sqrt(),
        }
    }

    /// Derivative of the output map, used to price translated thresholds.
    pub fn g_prime(&self, v: f64) -> f64 {
        match self.kind {
            OutputKind::V => 1.0,
            OutputKind::VSquared => 2.0 * v,
        }
    }

    pub fn gmin(&self, j: usize) -> f64 {
        self.g(self.vmin[j])
    }

    pub fn gmax(&self, j: usize) -> f64 {
        self.g(self.vmax[j])
    }

    pub fn lo_value(&self, j: usize, t: usize) -> f64 {
        self.g(self.vmin[j] + t as f64 * self.eps)
    }

    pub fn hi_value(&self, j: usize, t: usize) -> f64 {
        self.g(self.vmax[j] - t as f64 * self.eps)
    }

    pub fn lo_top(&self, j: usize) -> usize {
        self.lo_slots[j] - 1
    }

    pub fn hi_top(&self, j: usize) -> usize {
        self.hi_slots[j] - 1
    }

    /// Smallest value of the under-estimator of bus i over the box.
    pub fn under_min(&self, i: usize) -> f64 {
        self.cu[i] - self.ua1[i].iter().zip(&self.width).map(|(a, w)| w * (-a).max(0.0)).sum::<f64>()
    }

    pub fn over_max(&self, i: usize) -> f64 {
        self.co[i] + self.oa1[i].iter().zip(&self.width).map(|(a, w)| w * a.max(0.0)).sum::<f64>()
    }

    /// Big-M letting a sensor at bus i certify that bus directly.
    pub fn own_m_lo(&self, i: usize) -> f64 {
        (self.gmin(i) - self.under_min(i)).max(0.0) + 1e-6
    }

    pub fn own_m_hi(&self, i: usize) -> f64 {
        (self.over_max(i) - self.gmax(i)).max(0.0) + 1e-6
    }

    pub fn problems(&self) -> usize {
        self.risk_lo.len() + self.risk_hi.len()
    }

    /// Reduced lower-level LP: extreme estimate of bus i given sensor rows
    /// `(j, threshold)` in the output domain.
    pub fn bound(&self, side: Side, i: usize, rows: &[(usize, f64)]) -> Result<LpValue, PlacementError> {
        let k = 2 * self.n;
        let mut m = LinearModel::new("lower_level");
        let z: Vec<_> = (0..k).map(|c| m.add_var(format!("z{c}"), 0.0, self.width[c])).collect();
        for &(j, thr) in rows {
            match side {
                Side::Lower => {
                    let co: Vec<_> = z.iter().zip(&self.oa1[j]).filter(|p| *p.1 != 0.0).map(|(&v, &a)| (v, a)).collect();
                    m.add_constraint(format!("sens{j}"), co, Relation::Ge, thr - self.co[j]);
                }
                Side::Upper => {
                    let co: Vec<_> = z.iter().zip(&self.ua1[j]).filter(|p| *p.1 != 0.0).map(|(&v, &a)| (v, a)).collect();
                    m.add_constraint(format!("sens{j}"), co, Relation::Le, thr - self.cu[j]);
                }
            }
        }
        let (sense, a, c0) = match side {
            Side::Lower => (Sense::Minimize, &self.ua1[i], self.cu[i]),
            Side::Upper => (Sense::Maximize, &self.oa1[i], self.co[i]),
        };
        m.set_objective(sense, z.iter().zip(a).map(|(&v, &c)| (v, c)).collect(), c0);
        let r = solve_lp(&m)?;
        match r.status {
            Status::Optimal => Ok(LpValue::Finite(r.objective)),
            Status::Infeasible => Ok(LpValue::Vacuous),
            status => Err(PlacementError::Lp {
                config: self.name.clone(),
                bus: self.ids[i],
                status,
            }),
        }
    }
}

/// Thresholds chosen for a fixed sensor set: slot per sensor and side.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Slots {
    pub lo: Vec<usize>,
    pub hi: Vec<usize>,
}

pub(crate) const CERT_TOL: f64 = 1e-9;

/// First at-risk bus of `p` that the sensors `set` with `slots` fail to
/// certify, with its bound. Own-bus sensors certify their bus directly.
pub(crate) fn first_failure(
    p: &Prepared,
    set: &[usize],
    slots: &Slots,
    exclude_own: bool,
    only: Option<(&[usize], &[usize])>,
) -> Result<Option<(Side, usize, f64)>, PlacementError> {
    let lo_rows: Vec<(usize, f64)> = set.iter().zip(&slots.lo).map(|(&j, &t)| (j, p.lo_value(j, t))).collect();
    let hi_rows: Vec<(usize, f64)> = set.iter().zip(&slots.hi).map(|(&j, &t)| (j, p.hi_value(j, t))).collect();
    let (lo_list, hi_list) = only.unwrap_or((&p.risk_lo, &p.risk_hi));
    for &i in lo_list {
        if !exclude_own && set.contains(&i) {
            continue;
        }
        let rows: Vec<(usize, f64)> = lo_rows.iter().filter(|r| !(exclude_own && r.0 == i)).cloned().collect();
        let v = p.bound(Side::Lower, i, &rows)?;
        if !v.lower_ok(p.gmin(i), CERT_TOL) {
            let LpValue::Finite(x) = v else { unreachable!() };
            return Ok(Some((Side::Lower, i, x)));
        }
    }
    for &i in hi_list {
        if !exclude_own && set.contains(&i) {
            continue;
        }
        let rows: Vec<(usize, f64)> = hi_rows.iter().filter(|r| !(exclude_own && r.0 == i)).cloned().collect();
        let v = p.bound(Side::Upper, i, &rows)?;
        if !v.upper_ok(p.gmax(i), CERT_TOL) {
            let LpValue::Finite(x) = v else { unreachable!() };
            return Ok(Some((Side::Upper, i, x)));
        }
    }
    Ok(None)
}

impl Slots {
    pub fn top(p: &Prepared, set: &[usize]) -> Self {
        Slots {
            lo: set.iter().map(|&j| p.lo_top(j)).collect(),
            hi: set.iter().map(|&j| p.hi_top(j)).collect(),
        }
    }

    pub fn zero(set: &[usize]) -> Self {
        Slots {
            lo: vec![0; set.len()],
            hi: vec![0; set.len()],
        }
    }
}
