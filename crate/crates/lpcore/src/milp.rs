//! Best-bound branch and bound over binary variables.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::rc::Rc;

use crate::error::ModelError;
use crate::model::{LinearModel, Sense, VarKind};
use crate::simplex::{Basis, LpSolver, LpStatus};
use crate::{lp_result, SolveResult, Status};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Branching {
    /// Variable closest to 0.5, lowest index on ties.
    #[default]
    MostFractional,
    /// Pseudo-cost product score, falling back to most-fractional until a
    /// variable has been branched in both directions.
    PseudoCost,
}

#[derive(Clone, Debug)]
pub struct MilpOptions {
    /// Relative gap at which the search stops.
    pub gap: f64,
    pub node_limit: usize,
    pub int_tol: f64,
    pub branching: Branching,
    /// Known feasible point used as the starting incumbent.
    pub incumbent: Option<Vec<f64>>,
    /// Root diving heuristic.
    pub dive: bool,
}

impl Default for MilpOptions {
    fn default() -> Self {
        Self {
            gap: 1e-9,
            node_limit: 100_000,
            int_tol: 1e-6,
            branching: Branching::default(),
            incumbent: None,
            dive: true,
        }
    }
}

pub fn solve_milp(m: &LinearModel, gap: f64, node_limit: usize) -> Result<SolveResult, ModelError> {
    solve_milp_with(
        m,
        &MilpOptions {
            gap,
            node_limit,
            ..Default::default()
        },
    )
}

struct Node {
    id: usize,
    bound: f64,
    fixes: Vec<(usize, f64, f64)>,
    basis: Option<Rc<Basis>>,
    // Branching record for pseudo-costs: (var, up?, fractional distance, parent bound).
    origin: Option<(usize, bool, f64, f64)>,
}

impl PartialEq for Node {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Node {
    // BinaryHeap pops the greatest: smallest bound first, then smallest id.
    fn cmp(&self, o: &Self) -> Ordering {
        o.bound.total_cmp(&self.bound).then_with(|| o.id.cmp(&self.id))
    }
}

fn rel_gap(inc: f64, bound: f64) -> f64 {
    if !inc.is_finite() {
        return f64::INFINITY;
    }
    let diff = (inc - bound).max(0.0);
    if diff <= 1e-12 {
        return 0.0;
    }
    diff / inc.abs().max(1e-10)
}

struct Search<'a> {
    model: &'a LinearModel,
    lp: LpSolver,
    sign: f64,
    bins: Vec<usize>,
    root_lb: Vec<f64>,
    root_ub: Vec<f64>,
    opts: &'a MilpOptions,
    inc_x: Option<Vec<f64>>,
    inc_val: f64,
    pc_sum: Vec<[f64; 2]>,
    pc_cnt: Vec<[usize; 2]>,
}

impl<'a> Search<'a> {
    fn min_obj(&self) -> f64 {
        self.sign * self.lp.objective()
    }

    fn apply(&mut self, fixes: &[(usize, f64, f64)]) {
        for k in 0..self.bins.len() {
            let j = self.bins[k];
            self.lp.set_bounds(j, self.root_lb[j], self.root_ub[j]);
        }
        for &(j, l, u) in fixes {
            self.lp.set_bounds(j, l, u);
        }
    }

    fn fractional(&self, x: &[f64]) -> Vec<(usize, f64)> {
        self.bins
            .iter()
            .filter_map(|&j| {
                let f = x[j] - x[j].floor();
                (f > self.opts.int_tol && f < 1.0 - self.opts.int_tol).then_some((j, f))
            })
            .collect()
    }

    fn pick_branch(&self, frac: &[(usize, f64)]) -> (usize, f64) {
        let most_fractional = || {
            let mut best = frac[0];
            for &(j, f) in frac {
                if (f - 0.5).abs() < (best.1 - 0.5).abs() - 1e-12 {
                    best = (j, f);
                }
            }
            best
        };
        match self.opts.branching {
            Branching::MostFractional => most_fractional(),
            Branching::PseudoCost => {
                let mut best: Option<(f64, usize, f64)> = None;
                for &(j, f) in frac {
                    let [cd, cu] = self.pc_cnt[j];
                    if cd == 0 || cu == 0 {
                        continue;
                    }
                    let down = self.pc_sum[j][0] / cd as f64 * f;
                    let up = self.pc_sum[j][1] / cu as f64 * (1.0 - f);
                    let score = down.max(1e-6) * up.max(1e-6);
                    if best.is_none_or(|(bs, _, _)| score > bs * (1.0 + 1e-9)) {
                        best = Some((score, j, f));
                    }
                }
                match best {
                    Some((_, j, f)) if frac.iter().all(|&(k, _)| {
                        let [a, b] = self.pc_cnt[k];
                        a > 0 && b > 0
                    }) => (j, f),
                    _ => most_fractional(),
                }
            }
        }
    }

    fn offer(&mut self, x: &[f64]) -> bool {
        let mut xr = x.to_vec();
        for &j in &self.bins {
            xr[j] = xr[j].round();
        }
        if self.model.max_violation(&xr) > 1e-6 {
            return false;
        }
        let v = self.sign * self.model.objective_value(&xr);
        if v < self.inc_val - 1e-12 {
            self.inc_val = v;
            self.inc_x = Some(xr);
            true
        } else {
            false
        }
    }

    /// Fix-and-resolve dive from the root relaxation.
    fn dive(&mut self, root_basis: &Basis) {
        let mut fixes: Vec<(usize, f64, f64)> = Vec::new();
        let mut x = self.lp.primal_values();
        for _ in 0..self.bins.len() + 1 {
            let frac = self.fractional(&x);
            if frac.is_empty() {
                self.offer(&x);
                break;
            }
            // Fix every nearly integral binary plus the least fractional one.
            let mut pick = frac[0];
            for &(j, f) in &frac {
                if (f - 0.5).abs() > (pick.1 - 0.5).abs() + 1e-12 {
                    pick = (j, f);
                }
            }
            let val = if pick.1 >= 0.5 { 1.0 } else { 0.0 };
            fixes.push((pick.0, val, val));
            for &j in &self.bins {
                if fixes.iter().any(|f| f.0 == j) {
                    continue;
                }
                let v = x[j];
                if v <= self.opts.int_tol {
                    fixes.push((j, 0.0, 0.0));
                } else if v >= 1.0 - self.opts.int_tol {
                    fixes.push((j, 1.0, 1.0));
                }
            }
            self.apply(&fixes);
            if self.lp.solve() != LpStatus::Optimal {
                break;
            }
            if self.min_obj() >= self.inc_val {
                break;
            }
            x = self.lp.primal_values();
        }
        self.apply(&[]);
        self.lp.set_basis(root_basis);
    }
}

pub fn solve_milp_with(m: &LinearModel, opts: &MilpOptions) -> Result<SolveResult, ModelError> {
    let mut lp = LpSolver::new(m)?;
    let sign = match m.objective.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    let bins: Vec<usize> = m
        .variables
        .iter()
        .enumerate()
        .filter(|(_, v)| v.kind == VarKind::Binary)
        .map(|(j, _)| j)
        .collect();
    let n = m.num_vars();
    let root_lb: Vec<f64> = (0..n).map(|j| lp.bounds(j).0).collect();
    let root_ub: Vec<f64> = (0..n).map(|j| lp.bounds(j).1).collect();
    let st = lp.solve();
    let mut iterations = lp.iterations();
    match st {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => return Ok(lp_result(&lp, st)),
        LpStatus::Unbounded => return Ok(lp_result(&lp, st)),
        LpStatus::IterationLimit => return Ok(lp_result(&lp, st)),
    }
    let mut s = Search {
        model: m,
        lp,
        sign,
        bins,
        root_lb,
        root_ub,
        opts,
        inc_x: None,
        inc_val: f64::INFINITY,
        pc_sum: vec![[0.0; 2]; n],
        pc_cnt: vec![[0; 2]; n],
    };
    if let Some(x0) = &opts.incumbent {
        if x0.len() == n {
            s.offer(x0);
        }
    }
    let root_x = s.lp.primal_values();
    let root_bound = s.min_obj();
    if s.fractional(&root_x).is_empty() {
        let improved = s.offer(&root_x);
        if improved || s.inc_x.is_none() {
            let mut r = lp_result(&s.lp, LpStatus::Optimal);
            for &j in &s.bins {
                r.x[j] = r.x[j].round();
            }
            r.mip_gap = Some(0.0);
            r.nodes = 1;
            return Ok(r);
        }
    }
    let root_basis = s.lp.basis();
    if opts.dive && !s.bins.is_empty() {
        s.dive(&root_basis);
        iterations = s.lp.iterations();
    }

    let mut heap = BinaryHeap::new();
    let mut next_id = 0usize;
    heap.push(Node {
        id: next_id,
        bound: root_bound,
        fixes: Vec::new(),
        basis: Some(Rc::new(root_basis)),
        origin: None,
    });
    next_id += 1;
    let mut nodes = 0usize;
    let mut best_bound = root_bound;
    let mut status = Status::Optimal;
    let mut first = true;

    while let Some(node) = heap.peek() {
        best_bound = node.bound.min(s.inc_val);
        if rel_gap(s.inc_val, best_bound) <= opts.gap {
            if rel_gap(s.inc_val, best_bound) > 0.0 {
                status = Status::GapLimit;
            }
            break;
        }
        if nodes >= opts.node_limit {
            status = Status::IterationLimit;
            break;
        }
        let node = heap.pop().unwrap();
        if node.bound >= s.inc_val - 1e-12 * s.inc_val.abs().max(1.0) {
            continue;
        }
        nodes += 1;
        let (x, bound) = if first {
            first = false;
            s.apply(&[]);
            if let Some(b) = &node.basis {
                s.lp.set_basis(b);
            }
            if s.lp.solve() != LpStatus::Optimal {
                continue;
            }
            (s.lp.primal_values(), s.min_obj())
        } else {
            s.apply(&node.fixes);
            if let Some(b) = &node.basis {
                s.lp.set_basis(b);
            }
            match s.lp.solve() {
                LpStatus::Optimal => (s.lp.primal_values(), s.min_obj()),
                LpStatus::IterationLimit => {
                    // Numerical trouble: restart from a cold basis once.
                    let cold = LpSolver::new(m)?;
                    s.lp = cold;
                    s.apply(&node.fixes);
                    if s.lp.solve() != LpStatus::Optimal {
                        continue;
                    }
                    (s.lp.primal_values(), s.min_obj())
                }
                _ => continue,
            }
        };
        if let Some((j, up, dist, pb)) = node.origin {
            let gain = (bound - pb).max(0.0) / dist.max(1e-9);
            let k = usize::from(up);
            s.pc_sum[j][k] += gain;
            s.pc_cnt[j][k] += 1;
        }
        if bound >= s.inc_val - 1e-12 * s.inc_val.abs().max(1.0) {
            continue;
        }
        let frac = s.fractional(&x);
        if frac.is_empty() {
            s.offer(&x);
            continue;
        }
        let (j, f) = s.pick_branch(&frac);
        let basis = Rc::new(s.lp.basis());
        for up in [false, true] {
            let mut fixes = node.fixes.clone();
            fixes.retain(|e| e.0 != j);
            let v = if up { 1.0 } else { 0.0 };
            fixes.push((j, v, v));
            heap.push(Node {
                id: next_id,
                bound,
                fixes,
                basis: Some(basis.clone()),
                origin: Some((j, up, if up { 1.0 - f } else { f }, bound)),
            });
            next_id += 1;
        }
    }
    if heap.is_empty() {
        best_bound = s.inc_val;
    }
    iterations = iterations.max(s.lp.iterations());
    let Some(x) = s.inc_x else {
        let st = if status == Status::IterationLimit {
            Status::IterationLimit
        } else {
            Status::Infeasible
        };
        let mut r = SolveResult::without_solution(st, iterations);
        r.nodes = nodes;
        r.bound = sign * best_bound;
        return Ok(r);
    };
    let objective = m.objective_value(&x);
    Ok(SolveResult {
        status,
        x,
        duals: None,
        reduced_costs: None,
        objective,
        bound: sign * best_bound,
        mip_gap: Some(rel_gap(s.inc_val, best_bound)),
        nodes,
        iterations,
    })
}
