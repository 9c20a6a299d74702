//! Bounded revised simplex (primal and dual) on the computational form
//! `A x - r = 0` with bounds on both structurals `x` and row activities `r`.

use crate::error::ModelError;
use crate::lu::{Factor, SparseCol};
use crate::model::{LinearModel, Relation, Sense};

const FEAS_TOL: f64 = 1e-9;
const OPT_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 64;
const BLAND_AFTER: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

/// Basis snapshot usable for warm starts on a solver over the same model.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Basis {
    pub head: Vec<usize>,
    pub at_upper: Vec<bool>,
}

#[derive(Clone, Debug)]
pub struct LpSolver {
    m: usize,
    n: usize,
    col_start: Vec<usize>,
    row_idx: Vec<usize>,
    vals: Vec<f64>,
    lb: Vec<f64>,
    ub: Vec<f64>,
    cost: Vec<f64>,
    sign: f64,
    constant: f64,
    head: Vec<usize>,
    pos_of: Vec<usize>,
    at_upper: Vec<bool>,
    x: Vec<f64>,
    factor: Factor,
    iterations: usize,
    pub iteration_limit: usize,
    status: Option<LpStatus>,
    y: Vec<f64>,
    d: Vec<f64>,
}

const NONBASIC: usize = usize::MAX;

impl LpSolver {
    /// Builds a solver for the continuous relaxation of `model`.
    pub fn new(model: &LinearModel) -> Result<Self, ModelError> {
        model.validate()?;
        if !model.bilinear.is_empty() {
            return Err(ModelError::Bilinear(model.bilinear.len()));
        }
        let m = model.num_rows();
        let n = model.num_vars();
        // Column-wise copy of A with duplicate entries merged.
        let mut per_col: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (i, c) in model.constraints.iter().enumerate() {
            for &(v, a) in &c.coeffs {
                per_col[v.0].push((i, a));
            }
        }
        let mut col_start = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::new();
        let mut vals = Vec::new();
        col_start.push(0);
        for col in per_col.iter_mut() {
            col.sort_by_key(|e| e.0);
            let mut k = 0;
            while k < col.len() {
                let i = col[k].0;
                let mut v = 0.0;
                while k < col.len() && col[k].0 == i {
                    v += col[k].1;
                    k += 1;
                }
                if v != 0.0 {
                    row_idx.push(i);
                    vals.push(v);
                }
            }
            col_start.push(row_idx.len());
        }
        let mut lb = Vec::with_capacity(n + m);
        let mut ub = Vec::with_capacity(n + m);
        for v in &model.variables {
            lb.push(v.lower);
            ub.push(v.upper);
        }
        for c in &model.constraints {
            let (l, u) = match c.relation {
                Relation::Le => (f64::NEG_INFINITY, c.rhs),
                Relation::Ge => (c.rhs, f64::INFINITY),
                Relation::Eq => (c.rhs, c.rhs),
            };
            lb.push(l);
            ub.push(u);
        }
        let sign = match model.objective.sense {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        };
        let mut cost = vec![0.0; n + m];
        for &(v, c) in &model.objective.coeffs {
            cost[v.0] += sign * c;
        }
        let mut s = Self {
            m,
            n,
            col_start,
            row_idx,
            vals,
            lb,
            ub,
            cost,
            sign,
            constant: model.objective.constant,
            head: (n..n + m).collect(),
            pos_of: vec![NONBASIC; n + m],
            at_upper: vec![false; n + m],
            x: vec![0.0; n + m],
            factor: Factor::default(),
            iterations: 0,
            iteration_limit: 50_000 + 20 * (n + m),
            status: None,
            y: vec![0.0; m],
            d: vec![0.0; n + m],
        };
        for (p, &j) in s.head.iter().enumerate() {
            s.pos_of[j] = p;
        }
        for j in 0..n {
            s.place_nonbasic(j);
        }
        s.refactor();
        Ok(s)
    }

    pub fn num_rows(&self) -> usize {
        self.m
    }

    pub fn num_cols(&self) -> usize {
        self.n
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn bounds(&self, j: usize) -> (f64, f64) {
        (self.lb[j], self.ub[j])
    }

    /// Changes the bounds of structural `j`; the basis is kept for a warm start.
    pub fn set_bounds(&mut self, j: usize, lower: f64, upper: f64) {
        self.lb[j] = lower;
        self.ub[j] = upper;
        if self.pos_of[j] == NONBASIC {
            self.place_nonbasic(j);
        }
        self.status = None;
    }

    pub fn basis(&self) -> Basis {
        Basis {
            head: self.head.clone(),
            at_upper: self.at_upper.clone(),
        }
    }

    pub fn set_basis(&mut self, b: &Basis) {
        if b.head.len() != self.m || b.at_upper.len() != self.n + self.m {
            return;
        }
        self.head.clone_from(&b.head);
        self.pos_of.iter_mut().for_each(|p| *p = NONBASIC);
        for (p, &j) in self.head.iter().enumerate() {
            self.pos_of[j] = p;
        }
        self.at_upper.clone_from(&b.at_upper);
        for j in 0..self.n + self.m {
            if self.pos_of[j] == NONBASIC {
                self.place_nonbasic(j);
            }
        }
        self.refactor();
        self.status = None;
    }

    fn place_nonbasic(&mut self, j: usize) {
        let (l, u) = (self.lb[j], self.ub[j]);
        self.x[j] = if self.at_upper[j] && u.is_finite() {
            u
        } else if l.is_finite() {
            self.at_upper[j] = false;
            l
        } else if u.is_finite() {
            self.at_upper[j] = true;
            u
        } else {
            self.at_upper[j] = false;
            0.0
        };
    }

    fn column(&self, j: usize) -> SparseCol {
        if j < self.n {
            let r = self.col_start[j]..self.col_start[j + 1];
            SparseCol {
                idx: self.row_idx[r.clone()].to_vec(),
                val: self.vals[r].to_vec(),
            }
        } else {
            SparseCol::unit(j - self.n, -1.0)
        }
    }

    fn dense_column(&self, j: usize) -> Vec<f64> {
        let mut a = vec![0.0; self.m];
        if j < self.n {
            for k in self.col_start[j]..self.col_start[j + 1] {
                a[self.row_idx[k]] = self.vals[k];
            }
        } else {
            a[j - self.n] = -1.0;
        }
        a
    }

    fn col_dot(&self, j: usize, y: &[f64]) -> f64 {
        if j < self.n {
            let mut s = 0.0;
            for k in self.col_start[j]..self.col_start[j + 1] {
                s += self.vals[k] * y[self.row_idx[k]];
            }
            s
        } else {
            -y[j - self.n]
        }
    }

    fn refactor(&mut self) {
        let cols: Vec<SparseCol> = self.head.iter().map(|&j| self.column(j)).collect();
        let out = Factor::factorize(self.m, &cols, -1.0);
        for &(p, row) in &out.replaced {
            let old = self.head[p];
            self.pos_of[old] = NONBASIC;
            self.place_nonbasic(old);
            let logical = self.n + row;
            if self.pos_of[logical] != NONBASIC {
                // Logical already basic elsewhere cannot happen for a leftover row.
                continue;
            }
            self.head[p] = logical;
            self.pos_of[logical] = p;
        }
        self.factor = out.factor;
        self.recompute_basics();
    }

    fn recompute_basics(&mut self) {
        // B x_B = -N x_N
        let mut rhs = vec![0.0; self.m];
        for j in 0..self.n + self.m {
            if self.pos_of[j] != NONBASIC || self.x[j] == 0.0 {
                continue;
            }
            let xj = self.x[j];
            if j < self.n {
                for k in self.col_start[j]..self.col_start[j + 1] {
                    rhs[self.row_idx[k]] -= self.vals[k] * xj;
                }
            } else {
                rhs[j - self.n] += xj;
            }
        }
        self.factor.ftran(&mut rhs);
        for (p, &j) in self.head.iter().enumerate() {
            self.x[j] = rhs[p];
        }
    }

    fn infeasibility(&self, j: usize) -> f64 {
        let v = self.x[j];
        if v < self.lb[j] - FEAS_TOL {
            self.lb[j] - v
        } else if v > self.ub[j] + FEAS_TOL {
            v - self.ub[j]
        } else {
            0.0
        }
    }

    fn compute_duals(&mut self, phase1: bool) {
        let mut cb = vec![0.0; self.m];
        for (p, &j) in self.head.iter().enumerate() {
            cb[p] = if phase1 {
                let v = self.x[j];
                if v < self.lb[j] - FEAS_TOL {
                    -1.0
                } else if v > self.ub[j] + FEAS_TOL {
                    1.0
                } else {
                    0.0
                }
            } else {
                self.cost[j]
            };
        }
        self.factor.btran(&mut cb);
        self.y = cb;
        for j in 0..self.n + self.m {
            if self.pos_of[j] != NONBASIC {
                self.d[j] = 0.0;
                continue;
            }
            let cj = if phase1 { 0.0 } else { self.cost[j] };
            self.d[j] = cj - self.col_dot(j, &self.y);
        }
    }

    /// Direction (+1 increase / -1 decrease) in which nonbasic `j` improves, if any.
    fn improving_dir(&self, j: usize, tol: f64) -> Option<f64> {
        let d = self.d[j];
        let (l, u) = (self.lb[j], self.ub[j]);
        if l == u {
            return None;
        }
        let at_up = self.at_upper[j] && u.is_finite();
        let free = !l.is_finite() && !u.is_finite();
        if free {
            if d < -tol {
                return Some(1.0);
            }
            if d > tol {
                return Some(-1.0);
            }
            return None;
        }
        if at_up {
            (d > tol).then_some(-1.0)
        } else if l.is_finite() {
            (d < -tol).then_some(1.0)
        } else {
            None
        }
    }

    /// Runs the simplex method from the current basis.
    pub fn solve(&mut self) -> LpStatus {
        if self.m == 0 {
            return self.solve_no_rows();
        }
        let st = if self.dual_feasible_after_flips() && self.max_primal_infeasibility() > FEAS_TOL {
            match self.dual_simplex() {
                Some(LpStatus::Infeasible) => LpStatus::Infeasible,
                Some(LpStatus::IterationLimit) => LpStatus::IterationLimit,
                _ => self.primal(),
            }
        } else {
            self.primal()
        };
        self.status = Some(st);
        if st == LpStatus::Optimal {
            self.compute_duals(false);
        }
        st
    }

    fn solve_no_rows(&mut self) -> LpStatus {
        for j in 0..self.n {
            let c = self.cost[j];
            let (l, u) = (self.lb[j], self.ub[j]);
            if c > 0.0 {
                if !l.is_finite() {
                    self.status = Some(LpStatus::Unbounded);
                    return LpStatus::Unbounded;
                }
                self.x[j] = l;
                self.at_upper[j] = false;
            } else if c < 0.0 {
                if !u.is_finite() {
                    self.status = Some(LpStatus::Unbounded);
                    return LpStatus::Unbounded;
                }
                self.x[j] = u;
                self.at_upper[j] = true;
            }
            self.d[j] = c;
        }
        self.status = Some(LpStatus::Optimal);
        LpStatus::Optimal
    }

    fn max_primal_infeasibility(&self) -> f64 {
        self.head
            .iter()
            .map(|&j| self.infeasibility(j))
            .fold(0.0, f64::max)
    }

    /// Flips boxed nonbasics with wrong-signed reduced costs; reports whether
    /// the basis is then dual feasible.
    fn dual_feasible_after_flips(&mut self) -> bool {
        self.compute_duals(false);
        let wrong: Vec<usize> = (0..self.n + self.m)
            .filter(|&j| self.pos_of[j] == NONBASIC && self.improving_dir(j, OPT_TOL).is_some())
            .collect();
        if wrong.iter().any(|&j| !(self.lb[j].is_finite() && self.ub[j].is_finite())) {
            return false;
        }
        for &j in &wrong {
            self.at_upper[j] = !self.at_upper[j];
            self.place_nonbasic(j);
        }
        if !wrong.is_empty() {
            self.recompute_basics();
        }
        true
    }

    fn primal(&mut self) -> LpStatus {
        let mut degenerate = 0usize;
        let mut bland = false;
        loop {
            if self.iterations >= self.iteration_limit {
                return LpStatus::IterationLimit;
            }
            if self.factor.num_updates() >= REFACTOR_EVERY {
                self.refactor();
            }
            let phase1 = self.max_primal_infeasibility() > FEAS_TOL;
            self.compute_duals(phase1);
            // Pricing.
            let mut q = None;
            let mut best = 0.0;
            for j in 0..self.n + self.m {
                if self.pos_of[j] != NONBASIC {
                    continue;
                }
                if self.improving_dir(j, OPT_TOL).is_some() {
                    let score = self.d[j].abs();
                    if bland {
                        q = Some(j);
                        break;
                    }
                    if score > best {
                        best = score;
                        q = Some(j);
                    }
                }
            }
            let Some(q) = q else {
                if phase1 {
                    // Confirm with a fresh factorization before declaring infeasible.
                    if self.factor.num_updates() > 0 {
                        self.refactor();
                        continue;
                    }
                    return LpStatus::Infeasible;
                }
                if self.factor.num_updates() > 0 {
                    self.refactor();
                    if self.max_primal_infeasibility() > FEAS_TOL {
                        continue;
                    }
                    self.compute_duals(false);
                    let again = (0..self.n + self.m).any(|j| {
                        self.pos_of[j] == NONBASIC && self.improving_dir(j, OPT_TOL).is_some()
                    });
                    if again {
                        continue;
                    }
                }
                return LpStatus::Optimal;
            };
            let dir = self.improving_dir(q, OPT_TOL).unwrap();
            let mut alpha = self.dense_column(q);
            self.factor.ftran(&mut alpha);
            let (theta, leave) = self.ratio_test(&alpha, dir, phase1, bland);
            let range = self.ub[q] - self.lb[q];
            let flip = range.is_finite() && range <= theta.unwrap_or(f64::INFINITY);
            let Some(theta) = (if flip { Some(range) } else { theta }) else {
                if phase1 {
                    self.refactor();
                    self.iterations += 1;
                    continue;
                }
                return LpStatus::Unbounded;
            };
            self.iterations += 1;
            if theta <= 1e-12 {
                degenerate += 1;
                if degenerate > BLAND_AFTER {
                    bland = true;
                }
            } else {
                degenerate = 0;
                bland = false;
            }
            let step = dir * theta;
            self.x[q] += step;
            for (p, &j) in self.head.iter().enumerate() {
                if alpha[p] != 0.0 {
                    self.x[j] -= step * alpha[p];
                }
            }
            if flip {
                self.at_upper[q] = dir > 0.0;
                self.place_nonbasic(q);
                continue;
            }
            let (p, to_upper) = leave.unwrap();
            let out = self.head[p];
            self.at_upper[out] = to_upper;
            self.x[out] = if to_upper { self.ub[out] } else { self.lb[out] };
            self.pos_of[out] = NONBASIC;
            self.head[p] = q;
            self.pos_of[q] = p;
            self.at_upper[q] = false;
            if alpha[p].abs() < 1e-7 {
                self.refactor();
            } else {
                self.factor.update(p, &alpha);
            }
        }
    }

    /// Harris two-pass ratio test. Returns the step length and the leaving
    /// position with the bound it lands on.
    fn ratio_test(
        &self,
        alpha: &[f64],
        dir: f64,
        phase1: bool,
        bland: bool,
    ) -> (Option<f64>, Option<(usize, bool)>) {
        // Rate of change of each basic per unit step.
        let limit = |p: usize, relax: f64| -> Option<(f64, bool)> {
            let j = self.head[p];
            let rate = -dir * alpha[p];
            if rate.abs() <= PIVOT_TOL {
                return None;
            }
            let v = self.x[j];
            let (l, u) = (self.lb[j], self.ub[j]);
            if phase1 && v < l - FEAS_TOL {
                return (rate > 0.0).then(|| (((l + relax) - v) / rate, false));
            }
            if phase1 && v > u + FEAS_TOL {
                return (rate < 0.0).then(|| ((v - (u - relax)) / -rate, true));
            }
            if rate < 0.0 && l.is_finite() {
                Some((((v - l) + relax) / -rate, false))
            } else if rate > 0.0 && u.is_finite() {
                Some((((u - v) + relax) / rate, true))
            } else {
                None
            }
        };
        if bland {
            let mut best: Option<(f64, usize, usize, bool)> = None;
            for p in 0..self.m {
                if let Some((t, up)) = limit(p, 0.0) {
                    let t = t.max(0.0);
                    let j = self.head[p];
                    let better = match best {
                        None => true,
                        Some((bt, _, bj, _)) => t < bt - 1e-12 || (t <= bt + 1e-12 && j < bj),
                    };
                    if better {
                        best = Some((t, j, p, up));
                    }
                }
            }
            return match best {
                Some((t, _, p, up)) => (Some(t), Some((p, up))),
                None => (None, None),
            };
        }
        let mut tmax = f64::INFINITY;
        for p in 0..self.m {
            if let Some((t, _)) = limit(p, FEAS_TOL) {
                tmax = tmax.min(t);
            }
        }
        if !tmax.is_finite() {
            return (None, None);
        }
        let mut best: Option<(f64, usize, bool, f64)> = None;
        for p in 0..self.m {
            if let Some((t, up)) = limit(p, 0.0) {
                if t <= tmax {
                    let a = alpha[p].abs();
                    let better = match best {
                        None => true,
                        Some((ba, bp, _, _)) => a > ba || (a == ba && self.head[p] < self.head[bp]),
                    };
                    if better {
                        best = Some((a, p, up, t));
                    }
                }
            }
        }
        match best {
            Some((_, p, up, t)) => (Some(t.max(0.0)), Some((p, up))),
            None => (None, None),
        }
    }

    fn dual_simplex(&mut self) -> Option<LpStatus> {
        let limit = self.iterations + 20 * (self.m + self.n) + 1000;
        loop {
            if self.iterations >= self.iteration_limit {
                return Some(LpStatus::IterationLimit);
            }
            if self.iterations >= limit {
                return None;
            }
            if self.factor.num_updates() >= REFACTOR_EVERY {
                self.refactor();
            }
            // Leaving row: largest infeasibility, lowest index on ties.
            let mut r = None;
            let mut worst = FEAS_TOL;
            for (p, &j) in self.head.iter().enumerate() {
                let inf = self.infeasibility(j);
                if inf > worst {
                    worst = inf;
                    r = Some(p);
                }
            }
            let Some(r) = r else {
                return Some(LpStatus::Optimal);
            };
            self.compute_duals(false);
            let jr = self.head[r];
            let below = self.x[jr] < self.lb[jr];
            let mut rho = vec![0.0; self.m];
            rho[r] = 1.0;
            self.factor.btran(&mut rho);
            // x_r = const - sum alpha_rj x_j; choose entering by dual ratio.
            let mut best: Option<(f64, f64, usize)> = None; // (ratio, |alpha|, j)
            for j in 0..self.n + self.m {
                if self.pos_of[j] != NONBASIC || self.lb[j] == self.ub[j] {
                    continue;
                }
                let a = self.col_dot(j, &rho);
                if a.abs() <= PIVOT_TOL {
                    continue;
                }
                let (l, u) = (self.lb[j], self.ub[j]);
                let free = !l.is_finite() && !u.is_finite();
                let at_up = self.at_upper[j] && u.is_finite();
                // Need x_r to move toward its violated bound.
                let inc_ok = !at_up || free; // x_j can increase
                let dec_ok = at_up || free || (!l.is_finite() && u.is_finite());
                let usable = if below {
                    (a < 0.0 && inc_ok) || (a > 0.0 && dec_ok)
                } else {
                    (a > 0.0 && inc_ok) || (a < 0.0 && dec_ok)
                };
                if !usable {
                    continue;
                }
                let ratio = self.d[j].abs() / a.abs();
                let better = match best {
                    None => true,
                    Some((br, ba, bj)) => {
                        ratio < br - 1e-12
                            || (ratio <= br + 1e-12 && (a.abs() > ba || (a.abs() == ba && j < bj)))
                    }
                };
                if better {
                    best = Some((ratio, a.abs(), j));
                }
            }
            let Some((_, _, q)) = best else {
                if self.factor.num_updates() > 0 {
                    self.refactor();
                    continue;
                }
                return Some(LpStatus::Infeasible);
            };
            self.iterations += 1;
            let mut alpha = self.dense_column(q);
            self.factor.ftran(&mut alpha);
            if alpha[r].abs() < 1e-9 {
                self.refactor();
                return None;
            }
            let target = if below { self.lb[jr] } else { self.ub[jr] };
            let dxr = target - self.x[jr];
            let dxq = -dxr / alpha[r];
            self.x[q] += dxq;
            for (p, &j) in self.head.iter().enumerate() {
                if alpha[p] != 0.0 {
                    self.x[j] -= dxq * alpha[p];
                }
            }
            self.x[jr] = target;
            self.at_upper[jr] = !below;
            self.pos_of[jr] = NONBASIC;
            self.head[r] = q;
            self.pos_of[q] = r;
            self.at_upper[q] = false;
            self.factor.update(r, &alpha);
        }
    }

    pub fn status(&self) -> Option<LpStatus> {
        self.status
    }

    /// Structural values.
    pub fn primal_values(&self) -> Vec<f64> {
        self.x[..self.n].to_vec()
    }

    /// Row activities `A x`.
    pub fn row_values(&self) -> Vec<f64> {
        self.x[self.n..].to_vec()
    }

    /// Sensitivity of the objective to each row's right-hand side.
    pub fn row_duals(&self) -> Vec<f64> {
        self.y.iter().map(|v| self.sign * v).collect()
    }

    /// Reduced costs of the structurals in the model's sense.
    pub fn reduced_costs(&self) -> Vec<f64> {
        self.d[..self.n].iter().map(|v| self.sign * v).collect()
    }

    pub fn objective(&self) -> f64 {
        let s: f64 = (0..self.n).map(|j| self.cost[j] * self.x[j]).sum();
        self.sign * s + self.constant
    }

    /// Objective of the dual problem assembled from row duals, reduced costs
    /// and the bounds they price.
    pub fn dual_objective(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.m {
            let yi = self.y[i];
            if yi == 0.0 {
                continue;
            }
            let j = self.n + i;
            let bound = if yi > 0.0 { self.lb[j] } else { self.ub[j] };
            let bound = if bound.is_finite() { bound } else { self.x[j] };
            s += yi * bound;
        }
        for j in 0..self.n {
            let dj = self.d[j];
            if dj == 0.0 || self.pos_of[j] != NONBASIC {
                continue;
            }
            let bound = if dj > 0.0 { self.lb[j] } else { self.ub[j] };
            let bound = if bound.is_finite() { bound } else { self.x[j] };
            s += dj * bound;
        }
        self.sign * s + self.constant
    }
}
