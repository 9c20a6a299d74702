//! Single-level model builders and model statistics.

use std::collections::BTreeMap;

use lpcore::{solve_lp, LinearModel, Relation, Sense, Status, VarId};
use serde::{Deserialize, Serialize};

use super::prepare::{Prepared, Side};
use super::{Formulation, PlacementError, PlacementOptions, PlacementSpec};

/// A built model plus the variable layout needed to decode solutions.
#[derive(Clone, Debug)]
pub struct PlacementModel {
    pub formulation: Formulation,
    pub model: LinearModel,
    pub b: usize,
    pub r: usize,
    pub(crate) layout: Layout,
}

#[derive(Clone, Debug, Default)]
pub(crate) struct Layout {
    /// Sensor binaries by bus index; empty for fixed sensor sets.
    pub s: Vec<VarId>,
    /// Candidate buses (all buses, or the fixed set).
    pub cand: Vec<usize>,
    /// [config][candidate position][slot] selectors.
    pub eta_lo: Vec<Vec<Vec<VarId>>>,
    pub eta_hi: Vec<Vec<Vec<VarId>>>,
    /// [config][bus] continuous thresholds in the output domain.
    pub u_lo: Vec<Vec<VarId>>,
    pub u_hi: Vec<Vec<VarId>>,
    /// Duals whose bound fell back to the user dual bound.
    pub clipped: Vec<(VarId, f64)>,
}

/// Which lower-level problems to include, per configuration.
pub(crate) struct Problems {
    pub lo: Vec<Vec<usize>>,
    pub hi: Vec<Vec<usize>>,
}

impl Problems {
    pub fn all(prep: &[Prepared]) -> Self {
        Problems {
            lo: prep.iter().map(|p| p.risk_lo.clone()).collect(),
            hi: prep.iter().map(|p| p.risk_hi.clone()).collect(),
        }
    }

    pub fn count(&self) -> usize {
        self.lo.iter().chain(&self.hi).map(Vec::len).sum()
    }
}

fn objective_linear(coeffs: &mut BTreeMap<usize, f64>, v: VarId, c: f64) {
    *coeffs.entry(v.0).or_insert(0.0) += c;
}

fn finish_objective(m: &mut LinearModel, coeffs: BTreeMap<usize, f64>, constant: f64) {
    let co = coeffs.into_iter().filter(|p| p.1 != 0.0).map(|(k, c)| (VarId(k), c)).collect();
    m.set_objective(Sense::Minimize, co, constant);
}

fn sensors(m: &mut LinearModel, p: &Prepared, coeffs: &mut BTreeMap<usize, f64>, delta: f64) -> Vec<VarId> {
    (0..p.n)
        .map(|j| {
            let s = m.add_binary(format!("s[{}]", p.ids[j]));
            objective_linear(coeffs, s, delta);
            s
        })
        .collect()
}

/// Buses whose sensor rows enter the problem of bus i.
fn rows_for(cand: &[usize], i: usize, exclude_own: bool) -> Vec<usize> {
    cand.iter().copied().filter(|&j| !(exclude_own && j == i)).collect()
}

/// Largest useful value of each sensor dual of problem (side, i): the LP
/// maximum over dual-feasible points certifying with every threshold at
/// its top slot. `None` when unbounded.
fn dual_caps(p: &Prepared, side: Side, i: usize, js: &[usize]) -> Result<Vec<Option<f64>>, PlacementError> {
    let k = 2 * p.n;
    let mut out = Vec::with_capacity(js.len());
    for target in 0..js.len() {
        let mut m = LinearModel::new("dual_cap");
        let y1: Vec<_> = (0..k).map(|c| m.add_var(format!("y1_{c}"), 0.0, f64::INFINITY)).collect();
        let y3: Vec<_> = js.iter().map(|j| m.add_var(format!("y3_{j}"), 0.0, f64::INFINITY)).collect();
        for c in 0..k {
            let mut co = vec![(y1[c], 1.0)];
            match side {
                Side::Lower => {
                    co.extend(js.iter().zip(&y3).filter(|(&j, _)| p.oa1[j][c] != 0.0).map(|(&j, &v)| (v, -p.oa1[j][c])));
                    m.add_constraint("dual", co, Relation::Ge, -p.ua1[i][c]);
                }
                Side::Upper => {
                    co.extend(js.iter().zip(&y3).filter(|(&j, _)| p.ua1[j][c] != 0.0).map(|(&j, &v)| (v, p.ua1[j][c])));
                    m.add_constraint("dual", co, Relation::Ge, p.oa1[i][c]);
                }
            }
        }
        match side {
            Side::Lower => {
                let mut co: Vec<_> = (0..k).filter(|&c| p.width[c] != 0.0).map(|c| (y1[c], -p.width[c])).collect();
                co.extend(js.iter().zip(&y3).map(|(&j, &v)| (v, p.lo_value(j, p.lo_top(j)) - p.co[j])));
                m.add_constraint("cert", co, Relation::Ge, p.gmin(i) - p.cu[i]);
            }
            Side::Upper => {
                let mut co: Vec<_> = (0..k).filter(|&c| p.width[c] != 0.0).map(|c| (y1[c], p.width[c])).collect();
                co.extend(js.iter().zip(&y3).map(|(&j, &v)| (v, p.hi_value(j, p.hi_top(j)) - p.cu[j])));
                m.add_constraint("cert", co, Relation::Le, p.gmax(i) - p.co[i]);
            }
        }
        m.set_objective(Sense::Maximize, vec![(y3[target], 1.0)], 0.0);
        let r = solve_lp(&m)?;
        out.push(match r.status {
            Status::Optimal => Some(r.objective.max(0.0) * (1.0 + 1e-4) + 1e-7),
            // Certification impossible at the top slots: the dual is empty and
            // any bound is valid.
            Status::Infeasible => Some(0.0),
            Status::Unbounded => None,
            status => {
                return Err(PlacementError::Lp {
                    config: p.name.clone(),
                    bus: p.ids[i],
                    status,
                })
            }
        });
    }
    Ok(out)
}

/// Discretized MILP over all configurations. With `fixed`, sensor binaries
/// are replaced by the given set and only the thresholds remain free.
pub(crate) fn milp_model(
    prep: &[Prepared],
    o: &PlacementOptions,
    probs: &Problems,
    weight: f64,
    fixed: Option<&[usize]>,
) -> Result<PlacementModel, PlacementError> {
    let p0 = &prep[0];
    let n = p0.n;
    let mut m = LinearModel::new(if fixed.is_some() { "placement_thresholds" } else { "placement_milp" });
    let mut obj = BTreeMap::new();
    let mut lay = Layout::default();
    let s: Vec<VarId> = match fixed {
        None => sensors(&mut m, p0, &mut obj, o.delta),
        Some(_) => Vec::new(),
    };
    lay.cand = fixed.map(<[usize]>::to_vec).unwrap_or_else(|| (0..n).collect());
    let my = o.dual_bound;
    for (c, p) in prep.iter().enumerate() {
        let tag = |j: usize| format!("{c},{}", p.ids[j]);
        let mut lo_eta = Vec::new();
        let mut hi_eta = Vec::new();
        for &j in &lay.cand {
            let mk = |side: &str, slots: usize, m: &mut LinearModel, obj: &mut BTreeMap<usize, f64>| {
                let etas: Vec<VarId> = (0..slots)
                    .map(|t| {
                        let e = m.add_binary(format!("eta_{side}[{},{t}]", tag(j)));
                        objective_linear(obj, e, weight * t as f64 * p.eps);
                        e
                    })
                    .collect();
                let mut co: Vec<_> = etas.iter().map(|&e| (e, 1.0)).collect();
                let rhs = match fixed {
                    None => {
                        co.push((s[j], -1.0));
                        0.0
                    }
                    Some(_) => 1.0,
                };
                m.add_constraint(format!("sel_{side}[{}]", tag(j)), co, Relation::Eq, rhs);
                etas
            };
            lo_eta.push(mk("lo", p.lo_slots[j], &mut m, &mut obj));
            if !probs.hi[c].is_empty() {
                hi_eta.push(mk("hi", p.hi_slots[j], &mut m, &mut obj));
            }
        }
        for (side, list) in [(Side::Lower, &probs.lo[c]), (Side::Upper, &probs.hi[c])] {
            for &i in list {
                let js = rows_for(&lay.cand, i, o.exclude_own_bus);
                let caps = dual_caps(p, side, i, &js)?;
                let caps: Vec<(f64, bool)> = caps
                    .into_iter()
                    .map(|c| match c {
                        Some(v) if v < my => (v, false),
                        _ => (my, true),
                    })
                    .collect();
                let pt = format!("{c},{},{}", p.ids[i], side.tag());
                let y3: Vec<VarId> = js
                    .iter()
                    .zip(&caps)
                    .map(|(&j, &(cap, clip))| {
                        let v = m.add_var(format!("ys[{pt},{}]", p.ids[j]), 0.0, cap);
                        if clip {
                            lay.clipped.push((v, cap));
                        }
                        v
                    })
                    .collect();
                let mut y1 = Vec::with_capacity(2 * n);
                for k in 0..2 * n {
                    let (own, other) = match side {
                        Side::Lower => (-p.ua1[i][k], js.iter().zip(&caps).map(|(&j, c)| p.oa1[j][k].max(0.0) * c.0).sum::<f64>()),
                        Side::Upper => (p.oa1[i][k], js.iter().zip(&caps).map(|(&j, c)| (-p.ua1[j][k]).max(0.0) * c.0).sum::<f64>()),
                    };
                    let cap = (own.max(0.0) + other) * (1.0 + 1e-9) + 1e-9;
                    let v = m.add_var(format!("yb[{pt},{k}]"), 0.0, cap.min(my));
                    if cap >= my {
                        lay.clipped.push((v, my));
                    }
                    y1.push(v);
                }
                for k in 0..2 * n {
                    let mut co = vec![(y1[k], 1.0)];
                    match side {
                        Side::Lower => {
                            co.extend(js.iter().zip(&y3).filter(|(&j, _)| p.oa1[j][k] != 0.0).map(|(&j, &v)| (v, -p.oa1[j][k])));
                            m.add_constraint(format!("dual[{pt},{k}]"), co, Relation::Ge, -p.ua1[i][k]);
                        }
                        Side::Upper => {
                            co.extend(js.iter().zip(&y3).filter(|(&j, _)| p.ua1[j][k] != 0.0).map(|(&j, &v)| (v, p.ua1[j][k])));
                            m.add_constraint(format!("dual[{pt},{k}]"), co, Relation::Ge, p.oa1[i][k]);
                        }
                    }
                }
                let sgn = if side == Side::Lower { -1.0 } else { 1.0 };
                let mut cert: Vec<(VarId, f64)> =
                    (0..2 * n).filter(|&k| p.width[k] != 0.0).map(|k| (y1[k], sgn * p.width[k])).collect();
                for ((&j, &yv), &(cap, _)) in js.iter().zip(&y3).zip(&caps) {
                    let pos = lay.cand.iter().position(|&q| q == j).unwrap();
                    let etas = if side == Side::Lower { &lo_eta[pos] } else { &hi_eta[pos] };
                    let mut sum = Vec::with_capacity(etas.len() + 1);
                    for (t, &e) in etas.iter().enumerate() {
                        let w = m.add_var(format!("w[{pt},{},{t}]", p.ids[j]), 0.0, cap);
                        m.add_constraint(format!("wcap[{pt},{},{t}]", p.ids[j]), vec![(w, 1.0), (e, -cap)], Relation::Le, 0.0);
                        let val = if side == Side::Lower { p.lo_value(j, t) } else { p.hi_value(j, t) };
                        cert.push((w, val));
                        sum.push((w, 1.0));
                    }
                    sum.push((yv, -1.0));
                    let rel = if side == Side::Lower { Relation::Le } else { Relation::Ge };
                    m.add_constraint(format!("wsum[{pt},{}]", p.ids[j]), sum, rel, 0.0);
                    let base = if side == Side::Lower { p.co[j] } else { p.cu[j] };
                    cert.push((yv, -base));
                }
                match side {
                    Side::Lower => {
                        if fixed.is_none() && !o.exclude_own_bus {
                            cert.push((s[i], p.own_m_lo(i)));
                        }
                        m.add_constraint(format!("cert_lo[{pt}]"), cert, Relation::Ge, p.gmin(i) - p.cu[i]);
                    }
                    Side::Upper => {
                        if fixed.is_none() && !o.exclude_own_bus {
                            cert.push((s[i], -p.own_m_hi(i)));
                        }
                        m.add_constraint(format!("cert_hi[{pt}]"), cert, Relation::Le, p.gmax(i) - p.co[i]);
                    }
                }
            }
        }
        lay.eta_lo.push(lo_eta);
        lay.eta_hi.push(hi_eta);
    }
    lay.s = s;
    finish_objective(&mut m, obj, 0.0);
    Ok(PlacementModel {
        formulation: Formulation::Milp,
        model: m,
        b: n,
        r: probs.count(),
        layout: lay,
    })
}

/// Continuous translated thresholds shared by the KKT and bilinear builds.
fn threshold_vars(
    m: &mut LinearModel,
    p: &Prepared,
    c: usize,
    s: &[VarId],
    upper: bool,
    o: &PlacementOptions,
    obj: &mut BTreeMap<usize, f64>,
    constant: &mut f64,
    weight: f64,
) -> (Vec<VarId>, Vec<VarId>) {
    let gm = p.g(o.big_m);
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    for j in 0..p.n {
        let id = p.ids[j];
        let u = m.add_var(format!("ulo[{c},{id}]"), 0.0, p.gmax(j));
        m.add_constraint(format!("link_lo[{c},{id}]"), vec![(u, 1.0), (s[j], -p.gmin(j))], Relation::Ge, 0.0);
        m.add_constraint(format!("link_lo[{c},{id}]"), vec![(u, 1.0), (s[j], -p.gmax(j))], Relation::Le, 0.0);
        let d = p.g_prime(p.vmin[j]);
        objective_linear(obj, u, weight / d);
        objective_linear(obj, s[j], -weight * p.gmin(j) / d);
        lo.push(u);
        if upper {
            let u = m.add_var(format!("uhi[{c},{id}]"), 0.0, gm);
            m.add_constraint(format!("link_hi[{c},{id}]"), vec![(u, 1.0), (s[j], gm - p.gmin(j))], Relation::Ge, gm);
            m.add_constraint(format!("link_hi[{c},{id}]"), vec![(u, 1.0), (s[j], gm - p.gmax(j))], Relation::Le, gm);
            let d = p.g_prime(p.vmax[j]);
            objective_linear(obj, u, -weight / d);
            objective_linear(obj, s[j], weight * (p.gmax(j) - gm) / d);
            *constant += weight * gm / d;
            hi.push(u);
        }
    }
    (lo, hi)
}

/// Duality-based model with explicit threshold-dual products (export only).
pub(crate) fn bilinear_model(prep: &[Prepared], o: &PlacementOptions) -> Result<PlacementModel, PlacementError> {
    let probs = Problems::all(prep);
    let p0 = &prep[0];
    let n = p0.n;
    let weight = 1.0 / prep.len() as f64;
    let mut m = LinearModel::new("placement_bilinear");
    let mut obj = BTreeMap::new();
    let mut constant = 0.0;
    let mut lay = Layout::default();
    let s = sensors(&mut m, p0, &mut obj, o.delta);
    lay.cand = (0..n).collect();
    let my = o.dual_bound;
    for (c, p) in prep.iter().enumerate() {
        let (ulo, uhi) = threshold_vars(&mut m, p, c, &s, !probs.hi[c].is_empty(), o, &mut obj, &mut constant, weight);
        for (side, list) in [(Side::Lower, &probs.lo[c]), (Side::Upper, &probs.hi[c])] {
            for &i in list {
                let pt = format!("{c},{},{}", p.ids[i], side.tag());
                let js = rows_for(&lay.cand, i, o.exclude_own_bus);
                let y1: Vec<VarId> = (0..2 * n).map(|k| m.add_var(format!("yb[{pt},{k}]"), 0.0, my)).collect();
                let y3: Vec<VarId> = js.iter().map(|&j| m.add_var(format!("ys[{pt},{}]", p.ids[j]), 0.0, my)).collect();
                lay.clipped.extend(y1.iter().chain(&y3).map(|&v| (v, my)));
                for k in 0..2 * n {
                    let mut co = vec![(y1[k], 1.0)];
                    let (rhs, a): (f64, Box<dyn Fn(usize) -> f64>) = match side {
                        Side::Lower => (-p.ua1[i][k], Box::new(|j: usize| -p.oa1[j][k])),
                        Side::Upper => (p.oa1[i][k], Box::new(|j: usize| p.ua1[j][k])),
                    };
                    co.extend(js.iter().zip(&y3).filter(|(&j, _)| a(j) != 0.0).map(|(&j, &v)| (v, a(j))));
                    m.add_constraint(format!("dual[{pt},{k}]"), co, Relation::Ge, rhs);
                }
                let sgn = if side == Side::Lower { -1.0 } else { 1.0 };
                let mut cert: Vec<(VarId, f64)> =
                    (0..2 * n).filter(|&k| p.width[k] != 0.0).map(|k| (y1[k], sgn * p.width[k])).collect();
                let row = match side {
                    Side::Lower => {
                        cert.extend(js.iter().zip(&y3).map(|(&j, &v)| (v, -p.co[j])));
                        if !o.exclude_own_bus {
                            cert.push((s[i], p.own_m_lo(i)));
                        }
                        m.add_constraint(format!("cert_lo[{pt}]"), cert, Relation::Ge, p.gmin(i) - p.cu[i])
                    }
                    Side::Upper => {
                        cert.extend(js.iter().zip(&y3).map(|(&j, &v)| (v, -p.cu[j])));
                        if !o.exclude_own_bus {
                            cert.push((s[i], -p.own_m_hi(i)));
                        }
                        m.add_constraint(format!("cert_hi[{pt}]"), cert, Relation::Le, p.gmax(i) - p.co[i])
                    }
                };
                let thr = if side == Side::Lower { &ulo } else { &uhi };
                for (&j, &v) in js.iter().zip(&y3) {
                    m.add_bilinear(row, thr[j], v, 1.0);
                }
            }
        }
        lay.u_lo.push(ulo);
        lay.u_hi.push(uhi);
    }
    lay.s = s;
    finish_objective(&mut m, obj, constant);
    Ok(PlacementModel {
        formulation: Formulation::Bilinear,
        model: m,
        b: n,
        r: probs.count(),
        layout: lay,
    })
}

/// Lower-level problems replaced by their KKT conditions, complementarity
/// through paired big-M rows.
pub(crate) fn kkt_model(prep: &[Prepared], o: &PlacementOptions) -> Result<PlacementModel, PlacementError> {
    let probs = Problems::all(prep);
    let p0 = &prep[0];
    let n = p0.n;
    let weight = 1.0 / prep.len() as f64;
    let big = o.kkt_big_m;
    let mut m = LinearModel::new("placement_kkt");
    let mut obj = BTreeMap::new();
    let mut constant = 0.0;
    let mut lay = Layout::default();
    let s = sensors(&mut m, p0, &mut obj, o.delta);
    lay.cand = (0..n).collect();
    for (c, p) in prep.iter().enumerate() {
        let (ulo, uhi) = threshold_vars(&mut m, p, c, &s, !probs.hi[c].is_empty(), o, &mut obj, &mut constant, weight);
        for (side, list) in [(Side::Lower, &probs.lo[c]), (Side::Upper, &probs.hi[c])] {
            for &i in list {
                let pt = format!("{c},{},{}", p.ids[i], side.tag());
                let js = rows_for(&lay.cand, i, o.exclude_own_bus);
                let x: Vec<VarId> = (0..2 * n).map(|k| m.add_var(format!("x[{pt},{k}]"), 0.0, p.width[k])).collect();
                let pi: Vec<VarId> = (0..2 * n).map(|k| m.add_var(format!("pi[{pt},{k}]"), 0.0, big)).collect();
                let lam: Vec<VarId> = js.iter().map(|&j| m.add_var(format!("lam[{pt},{}]", p.ids[j]), 0.0, big)).collect();
                // Objective gradient c and sensor row normals g_j of the
                // minimization form min c'z s.t. g_j'z >= h_j.
                let (grad, normal): (Vec<f64>, Box<dyn Fn(usize, usize) -> f64>) = match side {
                    Side::Lower => (p.ua1[i].clone(), Box::new(|j, k| p.oa1[j][k])),
                    Side::Upper => (p.oa1[i].iter().map(|a| -a).collect(), Box::new(|j, k| -p.ua1[j][k])),
                };
                for k in 0..2 * n {
                    let mut co = vec![(pi[k], 1.0)];
                    co.extend(js.iter().zip(&lam).filter(|(&j, _)| normal(j, k) != 0.0).map(|(&j, &l)| (l, -normal(j, k))));
                    m.add_constraint(format!("stat[{pt},{k}]"), co.clone(), Relation::Ge, -grad[k]);
                    let e = m.add_binary(format!("e[{pt},z{k}]"));
                    m.add_constraint(format!("comp[{pt},z{k}]"), vec![(x[k], 1.0), (e, -p.width[k])], Relation::Le, 0.0);
                    co.push((e, big));
                    m.add_constraint(format!("comp[{pt},mu{k}]"), co, Relation::Le, big - grad[k]);
                }
                for k in 0..2 * n {
                    m.add_constraint(format!("box_lo[{pt},{k}]"), vec![(x[k], 1.0)], Relation::Ge, 0.0);
                    m.add_constraint(format!("box_hi[{pt},{k}]"), vec![(x[k], 1.0)], Relation::Le, p.width[k]);
                    let f = m.add_binary(format!("e[{pt},pi{k}]"));
                    m.add_constraint(format!("comp[{pt},pi{k}]"), vec![(pi[k], 1.0), (f, -big)], Relation::Le, 0.0);
                    m.add_constraint(format!("comp[{pt},w{k}]"), vec![(x[k], -1.0), (f, p.width[k])], Relation::Le, 0.0);
                }
                for (&j, &l) in js.iter().zip(&lam) {
                    let id = p.ids[j];
                    // Sensor row g_j'z >= h_j in minimization form.
                    let (mut co, rhs): (Vec<(VarId, f64)>, f64) = match side {
                        Side::Lower => (vec![(ulo[j], -1.0)], -p.co[j]),
                        Side::Upper => (vec![(uhi[j], 1.0)], p.cu[j]),
                    };
                    co.extend((0..2 * n).filter(|&k| normal(j, k) != 0.0).map(|k| (x[k], normal(j, k))));
                    m.add_constraint(format!("sens[{pt},{id}]"), co.clone(), Relation::Ge, rhs);
                    let g = m.add_binary(format!("e[{pt},lam{id}]"));
                    m.add_constraint(format!("comp[{pt},lam{id}]"), vec![(l, 1.0), (g, -big)], Relation::Le, 0.0);
                    co.push((g, big));
                    m.add_constraint(format!("comp[{pt},sl{id}]"), co, Relation::Le, big + rhs);
                }
                match side {
                    Side::Lower => {
                        let mut co: Vec<_> = (0..2 * n).filter(|&k| p.ua1[i][k] != 0.0).map(|k| (x[k], p.ua1[i][k])).collect();
                        if !o.exclude_own_bus {
                            co.push((s[i], p.own_m_lo(i)));
                        }
                        m.add_constraint(format!("cert_lo[{pt}]"), co, Relation::Ge, p.gmin(i) - p.cu[i]);
                    }
                    Side::Upper => {
                        let mut co: Vec<_> = (0..2 * n).filter(|&k| p.oa1[i][k] != 0.0).map(|k| (x[k], p.oa1[i][k])).collect();
                        if !o.exclude_own_bus {
                            co.push((s[i], -p.own_m_hi(i)));
                        }
                        m.add_constraint(format!("cert_hi[{pt}]"), co, Relation::Le, p.gmax(i) - p.co[i]);
                    }
                }
            }
        }
        lay.u_lo.push(ulo);
        lay.u_hi.push(uhi);
    }
    lay.s = s;
    finish_objective(&mut m, obj, constant);
    Ok(PlacementModel {
        formulation: Formulation::Kkt,
        model: m,
        b: n,
        r: probs.count(),
        layout: lay,
    })
}

fn prepared(spec: &PlacementSpec, eps: f64) -> Result<Vec<Prepared>, PlacementError> {
    spec.validate()?;
    Ok(spec.configs.iter().map(|c| Prepared::new(c, &spec.options, eps, &[], &[])).collect())
}

pub fn build_milp(spec: &PlacementSpec) -> Result<PlacementModel, PlacementError> {
    let prep = prepared(spec, spec.options.epsilon)?;
    let probs = Problems::all(&prep);
    milp_model(&prep, &spec.options, &probs, 1.0 / prep.len() as f64, None)
}

pub fn build_bilinear(spec: &PlacementSpec) -> Result<PlacementModel, PlacementError> {
    let prep = prepared(spec, spec.options.epsilon)?;
    bilinear_model(&prep, &spec.options)
}

pub fn build_kkt(spec: &PlacementSpec) -> Result<PlacementModel, PlacementError> {
    let prep = prepared(spec, spec.options.epsilon)?;
    kkt_model(&prep, &spec.options)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoryCount {
    pub category: String,
    pub variables: usize,
    pub constraints: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelStats {
    pub formulation: Formulation,
    pub b: usize,
    pub r: usize,
    /// Decision variables, excluding complementarity binaries.
    pub variables: usize,
    /// Constraints, excluding complementarity rows.
    pub constraints: usize,
    pub binaries: usize,
    pub complementarity_binaries: usize,
    pub complementarity_constraints: usize,
    pub bilinear_terms: usize,
    /// Closed-form variable count for the KKT and bilinear builds.
    pub formula_variables: Option<usize>,
    pub categories: Vec<CategoryCount>,
}

fn category(name: &str) -> &str {
    name.split('[').next().unwrap_or(name)
}

pub fn model_stats(pm: &PlacementModel) -> ModelStats {
    let m = &pm.model;
    let mut cats: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for v in &m.variables {
        cats.entry(category(&v.name).to_string()).or_default().0 += 1;
    }
    for r in &m.constraints {
        cats.entry(category(&r.name).to_string()).or_default().1 += 1;
    }
    let comp_b = cats.get("e").map_or(0, |c| c.0);
    let comp_r = cats.get("comp").map_or(0, |c| c.1);
    let families = pm.layout.u_lo.iter().chain(&pm.layout.u_hi).filter(|f| !f.is_empty()).count();
    let (b, r) = (pm.b, pm.r);
    let formula_variables = match pm.formulation {
        Formulation::Kkt => Some(5 * b * r + b + b * families),
        Formulation::Bilinear => Some(3 * b * r + b + b * families),
        Formulation::Milp => None,
    };
    ModelStats {
        formulation: pm.formulation,
        b,
        r,
        variables: m.num_vars() - comp_b,
        constraints: m.num_rows() - comp_r,
        binaries: m.num_binaries(),
        complementarity_binaries: comp_b,
        complementarity_constraints: comp_r,
        bilinear_terms: m.bilinear.len(),
        formula_variables,
        categories: cats
            .into_iter()
            .map(|(category, (variables, constraints))| CategoryCount {
                category,
                variables,
                constraints,
            })
            .collect(),
    }
}
