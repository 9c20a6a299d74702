//! AC power flow by Newton's method in polar coordinates, with an optional
//! outer fixed-point loop for volt-VAR inverters.

use lpcore::lu::{Factor, SparseCol};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netmodel::{build_admittance, BusKind, Network};

#[derive(Debug, Error, PartialEq)]
pub enum PfError {
    #[error("singular Jacobian at Newton iteration {iteration}")]
    SingularJacobian { iteration: usize },
    #[error("injection vector has {got} entries, network has {want} PQ buses")]
    Dimension { got: usize, want: usize },
    #[error("tolerance must be positive")]
    BadTolerance,
}

/// Net injections at the PQ buses, in network PQ order (generation positive).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InjectionVector {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

impl InjectionVector {
    pub fn zeros(n: usize) -> Self {
        Self {
            p: vec![0.0; n],
            q: vec![0.0; n],
        }
    }

    /// Stacked (P; Q) coordinates as used by the CLAs.
    pub fn stacked(&self) -> Vec<f64> {
        let mut x = self.p.clone();
        x.extend_from_slice(&self.q);
        x
    }

    pub fn from_stacked(x: &[f64]) -> Self {
        let n = x.len() / 2;
        Self {
            p: x[..n].to_vec(),
            q: x[n..].to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PfSolution {
    /// Voltage magnitudes for every bus, in network bus order.
    pub v: Vec<f64>,
    pub theta: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub max_mismatch: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PfOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PfOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 30,
        }
    }
}

/// Piecewise-linear reactive droop: output `q_capacity * f(V)` where `f`
/// interpolates the breakpoints and is held flat outside them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VoltVarCurve {
    pub breakpoints: [(f64, f64); 5],
    pub q_capacity: f64,
}

impl VoltVarCurve {
    /// IEEE 1547 category B style droop with a deadband around 1 pu.
    pub fn default_droop(q_capacity: f64) -> Self {
        Self {
            breakpoints: [(0.92, 1.0), (0.98, 0.0), (1.0, 0.0), (1.02, 0.0), (1.08, -1.0)],
            q_capacity,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        for w in self.breakpoints.windows(2) {
            if !(w[0].0 < w[1].0) {
                return Err("volt-VAR breakpoint voltages must be strictly increasing".into());
            }
        }
        if self.breakpoints.iter().any(|&(_, f)| !(-1.0..=1.0).contains(&f)) {
            return Err("volt-VAR output fractions must lie in [-1, 1]".into());
        }
        if !(self.q_capacity >= 0.0) {
            return Err("volt-VAR capacity must be nonnegative".into());
        }
        Ok(())
    }

    pub fn output(&self, v: f64) -> f64 {
        let bp = &self.breakpoints;
        let f = if v <= bp[0].0 {
            bp[0].1
        } else if v >= bp[4].0 {
            bp[4].1
        } else {
            let k = bp.windows(2).position(|w| v <= w[1].0).unwrap();
            let (v0, f0) = bp[k];
            let (v1, f1) = bp[k + 1];
            f0 + (f1 - f0) * (v - v0) / (v1 - v0)
        };
        self.q_capacity * f
    }
}

/// Pre-processed network for repeated power-flow solves.
#[derive(Clone, Debug)]
pub struct PfModel {
    n: usize,
    slack: usize,
    pq: Vec<usize>,
    // Position of each bus among the PQ unknowns (usize::MAX for the slack).
    pos: Vec<usize>,
    // Row-wise sparse admittance: (column, G, B), diagonal included.
    rows: Vec<Vec<(usize, f64, f64)>>,
}

impl PfModel {
    pub fn new(net: &Network) -> Self {
        let y = build_admittance(net);
        let n = net.buses.len();
        let rows = (0..n)
            .map(|i| {
                (0..n)
                    .filter(|&k| k == i || y[i][k].norm() > 0.0)
                    .map(|k| (k, y[i][k].re, y[i][k].im))
                    .collect()
            })
            .collect();
        let pq = net.pq_indices();
        let mut pos = vec![usize::MAX; n];
        for (p, &i) in pq.iter().enumerate() {
            pos[i] = p;
        }
        let slack = net
            .buses
            .iter()
            .position(|b| b.kind == BusKind::Slack)
            .expect("network has a slack bus");
        Self { n, slack, pq, pos, rows }
    }

    pub fn num_pq(&self) -> usize {
        self.pq.len()
    }

    pub fn pq_buses(&self) -> &[usize] {
        &self.pq
    }

    /// Calculated injections (P, Q) at every bus.
    pub fn injections(&self, v: &[f64], th: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut p = vec![0.0; self.n];
        let mut q = vec![0.0; self.n];
        for i in 0..self.n {
            let mut sp = 0.0;
            let mut sq = 0.0;
            for &(k, g, b) in &self.rows[i] {
                let (s, c) = (th[i] - th[k]).sin_cos();
                sp += v[k] * (g * c + b * s);
                sq += v[k] * (g * s - b * c);
            }
            p[i] = v[i] * sp;
            q[i] = v[i] * sq;
        }
        (p, q)
    }

    /// Largest absolute P/Q mismatch over the PQ buses.
    pub fn mismatch(&self, inj: &InjectionVector, v: &[f64], th: &[f64]) -> f64 {
        let (p, q) = self.injections(v, th);
        self.pq
            .iter()
            .enumerate()
            .map(|(k, &i)| (inj.p[k] - p[i]).abs().max((inj.q[k] - q[i]).abs()))
            .fold(0.0, f64::max)
    }

    pub fn solve(&self, inj: &InjectionVector, opt: &PfOptions) -> Result<PfSolution, PfError> {
        let npq = self.pq.len();
        if inj.p.len() != npq || inj.q.len() != npq {
            return Err(PfError::Dimension {
                got: inj.p.len().min(inj.q.len()),
                want: npq,
            });
        }
        if !(opt.tol > 0.0) {
            return Err(PfError::BadTolerance);
        }
        let mut v = vec![1.0; self.n];
        let mut th = vec![0.0; self.n];
        let m = 2 * npq;
        let mut it = 0;
        loop {
            let (p, q) = self.injections(&v, &th);
            let mut mis = vec![0.0; m];
            let mut worst: f64 = 0.0;
            for (k, &i) in self.pq.iter().enumerate() {
                mis[k] = inj.p[k] - p[i];
                mis[npq + k] = inj.q[k] - q[i];
                worst = worst.max(mis[k].abs()).max(mis[npq + k].abs());
            }
            if !worst.is_finite() {
                return Ok(self.finish(v, th, it, false, worst));
            }
            if worst <= opt.tol {
                return Ok(self.finish(v, th, it, true, worst));
            }
            if it >= opt.max_iter {
                return Ok(self.finish(v, th, it, false, worst));
            }
            // Columns: theta of PQ bus k, then V of PQ bus k.
            let mut cols: Vec<SparseCol> = vec![SparseCol::default(); m];
            for (r, &i) in self.pq.iter().enumerate() {
                for &(k, g, b) in &self.rows[i] {
                    let c = self.pos[k];
                    if c == usize::MAX {
                        continue;
                    }
                    let (dpt, dpv, dqt, dqv);
                    if k == i {
                        dpt = -q[i] - b * v[i] * v[i];
                        dpv = p[i] / v[i] + g * v[i];
                        dqt = p[i] - g * v[i] * v[i];
                        dqv = q[i] / v[i] - b * v[i];
                    } else {
                        let (s, cs) = (th[i] - th[k]).sin_cos();
                        dpt = v[i] * v[k] * (g * s - b * cs);
                        dpv = v[i] * (g * cs + b * s);
                        dqt = -v[i] * v[k] * (g * cs + b * s);
                        dqv = v[i] * (g * s - b * cs);
                    }
                    push(&mut cols[c], r, dpt);
                    push(&mut cols[c], npq + r, dqt);
                    push(&mut cols[npq + c], r, dpv);
                    push(&mut cols[npq + c], npq + r, dqv);
                }
            }
            let out = Factor::factorize(m, &cols, 1.0);
            if !out.replaced.is_empty() {
                return Err(PfError::SingularJacobian { iteration: it });
            }
            out.factor.ftran(&mut mis);
            for (k, &i) in self.pq.iter().enumerate() {
                th[i] += mis[k];
                v[i] += mis[npq + k];
            }
            it += 1;
        }
    }

    fn finish(&self, v: Vec<f64>, mut th: Vec<f64>, it: usize, ok: bool, mm: f64) -> PfSolution {
        th[self.slack] = 0.0;
        PfSolution {
            v,
            theta: th,
            iterations: it,
            converged: ok,
            max_mismatch: mm,
        }
    }

    /// Newton solve wrapped in a damped fixed point on inverter reactive
    /// output. `curves` is indexed by PQ position.
    pub fn solve_voltvar(
        &self,
        inj: &InjectionVector,
        curves: &[Option<VoltVarCurve>],
        opt: &PfOptions,
    ) -> Result<PfSolution, PfError> {
        if curves.iter().all(|c| c.is_none()) {
            return self.solve(inj, opt);
        }
        let damping = 0.5;
        let mut qinv = vec![0.0; self.pq.len()];
        let mut work = inj.clone();
        let mut last = None;
        for _ in 0..VOLTVAR_MAX_OUTER {
            for k in 0..self.pq.len() {
                work.q[k] = inj.q[k] + qinv[k];
            }
            let sol = self.solve(&work, opt)?;
            if !sol.converged {
                return Ok(sol);
            }
            let mut gap: f64 = 0.0;
            for (k, c) in curves.iter().enumerate() {
                if let Some(c) = c {
                    let target = c.output(sol.v[self.pq[k]]);
                    gap = gap.max((target - qinv[k]).abs());
                    qinv[k] += damping * (target - qinv[k]);
                }
            }
            if gap <= opt.tol {
                return Ok(sol);
            }
            last = Some(sol);
        }
        let mut sol = last.expect("at least one outer iteration");
        sol.converged = false;
        Ok(sol)
    }
}

pub const VOLTVAR_MAX_OUTER: usize = 50;

fn push(col: &mut SparseCol, r: usize, v: f64) {
    if v != 0.0 {
        col.idx.push(r);
        col.val.push(v);
    }
}

pub fn solve_pf(net: &Network, inj: &InjectionVector, tol: f64, max_iter: usize) -> Result<PfSolution, PfError> {
    PfModel::new(net).solve(inj, &PfOptions { tol, max_iter })
}

/// `curves` is indexed by PQ position; `None` entries have no inverter.
pub fn solve_pf_voltvar(
    net: &Network,
    inj: &InjectionVector,
    curves: &[Option<VoltVarCurve>],
    tol: f64,
    max_iter: usize,
) -> Result<PfSolution, PfError> {
    PfModel::new(net).solve_voltvar(inj, curves, &PfOptions { tol, max_iter })
}

/// Volt-VAR curves attached to the network's PQ buses, in PQ order.
pub fn network_curves(net: &Network) -> Vec<Option<VoltVarCurve>> {
    net.pq_indices().iter().map(|&i| net.buses[i].voltvar.clone()).collect()
}
