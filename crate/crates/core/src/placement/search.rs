//! Solving: exact sensor-set decomposition of the discretized model, direct
//! branch and bound, decoding and the mandatory audit.

use std::time::Instant;

use lpcore::{solve_milp_with, MilpOptions, SolveResult, Status};

use super::build::{kkt_model, milp_model, PlacementModel, Problems};
use super::dual::audit_solution;
use super::prepare::{first_failure, Prepared, Side, Slots};
use super::{
    AtRisk, ConfigThresholds, Formulation, InfeasibilityReport, LimitSide, PlacementError, PlacementSolution,
    PlacementSpec, SensorThreshold, SolverInfo, Strategy,
};

const MAX_CLOSURE_ROUNDS: usize = 10;

struct Found {
    set: Vec<usize>,
    /// Per configuration: (lower, upper) thresholds in V for each sensor.
    levels: Vec<(Vec<f64>, Vec<f64>)>,
    objective: f64,
    nodes: usize,
    sets: usize,
    gap: f64,
    status: Status,
}

/// Solves the placement problem and audits the result. Buses that fail the
/// audit without having been flagged at risk are added to the at-risk sets
/// and the problem is solved again.
pub fn solve_placement(spec: &PlacementSpec) -> Result<PlacementSolution, PlacementError> {
    spec.validate()?;
    let o = &spec.options;
    let t0 = Instant::now();
    let eps = match o.formulation {
        Formulation::Bilinear if !o.discretize_fallback => return Err(PlacementError::ExportOnly),
        Formulation::Bilinear => o.fine_epsilon,
        _ => o.epsilon,
    };
    let n = spec.configs[0].bundle.pq_ids.len();
    let mut extra_lo: Vec<Vec<usize>> = vec![Vec::new(); spec.configs.len()];
    let mut extra_hi: Vec<Vec<usize>> = vec![Vec::new(); spec.configs.len()];
    for round in 0..MAX_CLOSURE_ROUNDS {
        let prep: Vec<Prepared> = spec
            .configs
            .iter()
            .zip(extra_lo.iter().zip(&extra_hi))
            .map(|(c, (lo, hi))| Prepared::new(c, o, eps, lo, hi))
            .collect();
        let found = match (o.formulation, o.strategy) {
            (Formulation::Kkt, _) => {
                let r: usize = prep.iter().map(Prepared::problems).sum();
                if n * r > o.kkt_guard {
                    return Err(PlacementError::KktGuard {
                        size: n * r,
                        guard: o.kkt_guard,
                    });
                }
                monolithic(&prep, spec, kkt_model(&prep, o)?)?
            }
            (_, Strategy::Monolithic) => {
                let probs = Problems::all(&prep);
                monolithic(&prep, spec, milp_model(&prep, o, &probs, 1.0 / prep.len() as f64, None)?)?
            }
            (_, Strategy::Decomposition) => decompose(&prep, spec)?,
        };
        let mut sol = decode(&prep, &found, spec, eps);
        let audit = audit_solution(&sol, &spec.configs, o.big_m)?;
        let mut grew = false;
        for (c, a) in audit.iter().enumerate() {
            for (i, b) in a.buses.iter().enumerate() {
                if b.ok {
                    continue;
                }
                let kind = prep[c].kind;
                let lo_fail = kind.of_voltage(b.lower_bound) < kind.of_voltage(b.v_min) - super::dual::AUDIT_TOL;
                let (list, flagged) = if lo_fail {
                    (&mut extra_lo[c], prep[c].risk_lo.contains(&i))
                } else {
                    (&mut extra_hi[c], prep[c].risk_hi.contains(&i))
                };
                if flagged {
                    return Err(PlacementError::Audit {
                        config: a.config.clone(),
                        bus: b.bus,
                        lower: b.lower_bound,
                        upper: b.upper_bound,
                    });
                }
                list.push(i);
                grew = true;
            }
        }
        if !grew {
            sol.audit = audit;
            if let Some(info) = sol.solver.as_mut() {
                info.closure_rounds = round;
                info.seconds = t0.elapsed().as_secs_f64();
            }
            return Ok(sol);
        }
    }
    Err(PlacementError::Spec(format!(
        "audit kept finding new at-risk buses after {MAX_CLOSURE_ROUNDS} rounds"
    )))
}

fn levels(p: &Prepared, set: &[usize], sl: &Slots) -> (Vec<f64>, Vec<f64>) {
    (
        set.iter().zip(&sl.lo).map(|(&j, &t)| grid(p.vmin[j], t as f64 * p.eps)).collect(),
        set.iter().zip(&sl.hi).map(|(&j, &t)| grid(p.vmax[j], -(t as f64) * p.eps)).collect(),
    )
}

fn decode(prep: &[Prepared], f: &Found, spec: &PlacementSpec, eps: f64) -> PlacementSolution {
    let p0 = &prep[0];
    let thresholds: Vec<ConfigThresholds> = prep
        .iter()
        .zip(&f.levels)
        .map(|(p, lv)| ConfigThresholds {
            config: p.name.clone(),
            sensors: f
                .set
                .iter()
                .enumerate()
                .map(|(pos, &j)| SensorThreshold {
                    bus: p.ids[j],
                    lower: lv.0[pos],
                    upper: lv.1[pos],
                    v_min: p.vmin[j],
                    v_max: p.vmax[j],
                })
                .collect(),
        })
        .collect();
    let o = &spec.options;
    PlacementSolution {
        sensors: f.set.iter().map(|&j| p0.ids[j]).collect(),
        objective: super::cost(&thresholds, o.delta),
        thresholds,
        audit: Vec::new(),
        solver: Some(SolverInfo {
            formulation: o.formulation,
            strategy: if o.formulation == Formulation::Kkt { Strategy::Monolithic } else { o.strategy },
            status: format!("{:?}", f.status).to_lowercase(),
            b: p0.n,
            r: prep.iter().map(Prepared::problems).sum(),
            at_risk: prep
                .iter()
                .map(|p| AtRisk {
                    config: p.name.clone(),
                    lower: p.risk_lo.iter().map(|&i| p.ids[i]).collect(),
                    upper: p.risk_hi.iter().map(|&i| p.ids[i]).collect(),
                })
                .collect(),
            epsilon: eps,
            nodes: f.nodes,
            sets_examined: f.sets,
            closure_rounds: 0,
            mip_gap: f.gap,
            seconds: 0.0,
        }),
    }
}

/// base + offset rounded onto the decimal grid to avoid drift like 0.90049999.
fn grid(base: f64, offset: f64) -> f64 {
    let v = base + offset;
    (v * 1e10).round() / 1e10
}

fn check_clipped(pm: &PlacementModel, x: &[f64]) -> Result<(), PlacementError> {
    for &(v, bound) in &pm.layout.clipped {
        if x[v.0] >= bound * (1.0 - 1e-9) - 1e-9 {
            return Err(PlacementError::DualBoundActive {
                name: pm.model.var(v).name.clone(),
                bound,
            });
        }
    }
    Ok(())
}

fn milp_options(spec: &PlacementSpec) -> MilpOptions {
    MilpOptions {
        gap: spec.options.mip_gap,
        node_limit: spec.options.node_limit,
        ..Default::default()
    }
}

fn solved(r: &SolveResult) -> Result<(), PlacementError> {
    match r.status {
        Status::Optimal | Status::GapLimit => Ok(()),
        Status::IterationLimit if r.has_solution() => Ok(()),
        status => Err(PlacementError::Solver { status }),
    }
}

fn worst_bus(prep: &[Prepared], o: &super::PlacementOptions) -> Result<InfeasibilityReport, PlacementError> {
    let all: Vec<usize> = (0..prep[0].n).collect();
    let mut worst: Option<(f64, InfeasibilityReport)> = None;
    for p in prep {
        let top = Slots::top(p, &all);
        for (side, list) in [(Side::Lower, &p.risk_lo), (Side::Upper, &p.risk_hi)] {
            for &i in list {
                if let Some((s, _, v)) = first_failure(p, &all, &top, o.exclude_own_bus, Some(side_only(side, i).as_ref()))? {
                    let (bound, limit) = (p.g_inv(v), if s == Side::Lower { p.vmin[i] } else { p.vmax[i] });
                    let short = (bound - limit).abs();
                    if worst.as_ref().map_or(true, |w| short > w.0) {
                        worst = Some((
                            short,
                            InfeasibilityReport {
                                config: p.name.clone(),
                                bus: p.ids[i],
                                side: if s == Side::Lower { LimitSide::Lower } else { LimitSide::Upper },
                                bound,
                                limit,
                            },
                        ));
                    }
                }
            }
        }
    }
    Ok(worst.map(|w| w.1).unwrap_or(InfeasibilityReport {
        config: prep[0].name.clone(),
        bus: prep[0].ids[0],
        side: LimitSide::Lower,
        bound: f64::NAN,
        limit: prep[0].vmin[0],
    }))
}

struct OneBus {
    lo: Vec<usize>,
    hi: Vec<usize>,
}

impl OneBus {
    fn as_ref(&self) -> (&[usize], &[usize]) {
        (&self.lo, &self.hi)
    }
}

fn side_only(side: Side, i: usize) -> OneBus {
    match side {
        Side::Lower => OneBus { lo: vec![i], hi: vec![] },
        Side::Upper => OneBus { lo: vec![], hi: vec![i] },
    }
}

fn monolithic(prep: &[Prepared], spec: &PlacementSpec, pm: PlacementModel) -> Result<Found, PlacementError> {
    let r = solve_milp_with(&pm.model, &milp_options(spec))?;
    if r.status == Status::Infeasible {
        return Err(PlacementError::Infeasible(worst_bus(prep, &spec.options)?));
    }
    solved(&r)?;
    check_clipped(&pm, &r.x)?;
    let lay = &pm.layout;
    let set: Vec<usize> = (0..prep[0].n).filter(|&j| r.x[lay.s[j].0] > 0.5).collect();
    let levels = prep
        .iter()
        .enumerate()
        .map(|(c, p)| {
            if pm.formulation == Formulation::Kkt {
                // Continuous thresholds, snapped onto the grid when within
                // rounding distance of a grid point.
                let snap = |v: f64, base: f64| {
                    let t = (v - base) / p.eps;
                    if (t - t.round()).abs() < 1e-4 {
                        grid(base, t.round() * p.eps)
                    } else {
                        v
                    }
                };
                let lo = set.iter().map(|&j| snap(p.g_inv(r.x[lay.u_lo[c][j].0]), p.vmin[j]).max(p.vmin[j])).collect();
                let hi = set
                    .iter()
                    .map(|&j| match lay.u_hi[c].get(j) {
                        Some(u) => snap(p.g_inv(r.x[u.0]), p.vmax[j]).min(p.vmax[j]),
                        None => p.vmax[j],
                    })
                    .collect();
                (lo, hi)
            } else {
                let pick = |etas: &Vec<Vec<lpcore::VarId>>, j: usize| -> usize {
                    etas.get(j)
                        .and_then(|e| e.iter().position(|v| r.x[v.0] > 0.5))
                        .unwrap_or(0)
                };
                let sl = Slots {
                    lo: set.iter().map(|&j| pick(&lay.eta_lo[c], j)).collect(),
                    hi: set.iter().map(|&j| pick(&lay.eta_hi[c], j)).collect(),
                };
                levels(p, &set, &sl)
            }
        })
        .collect();
    Ok(Found {
        set,
        levels,
        objective: r.objective,
        nodes: r.nodes,
        sets: 0,
        gap: r.mip_gap.unwrap_or(0.0),
        status: r.status,
    })
}

/// Lexicographic k-subsets of 0..n with completion pruning: a prefix is
/// abandoned when even adding every later bus cannot certify.
struct Enumerator<'a> {
    prep: &'a [Prepared],
    exclude_own: bool,
    n: usize,
    sets: usize,
}

impl Enumerator<'_> {
    fn feasible_top(&mut self, set: &[usize]) -> Result<Option<(usize, Side, usize, f64)>, PlacementError> {
        self.sets += 1;
        for (c, p) in self.prep.iter().enumerate() {
            if let Some((s, i, v)) = first_failure(p, set, &Slots::top(p, set), self.exclude_own, None)? {
                return Ok(Some((c, s, i, v)));
            }
        }
        Ok(None)
    }

    fn walk(
        &mut self,
        k: usize,
        prefix: &mut Vec<usize>,
        start: usize,
        visit: &mut dyn FnMut(&mut Self, &[usize]) -> Result<(), PlacementError>,
    ) -> Result<(), PlacementError> {
        if prefix.len() == k {
            if self.feasible_top(prefix)?.is_none() {
                visit(self, prefix)?;
            }
            return Ok(());
        }
        let need = k - prefix.len();
        for j in start..=self.n.saturating_sub(need) {
            prefix.push(j);
            let mut completion = prefix.clone();
            completion.extend(j + 1..self.n);
            let prune = need > 1 && self.feasible_top(&completion)?.is_some();
            if !prune {
                self.walk(k, prefix, j + 1, visit)?;
            }
            prefix.pop();
        }
        Ok(())
    }
}

/// Exact solve of the discretized model by sensor-set enumeration in
/// increasing cardinality. Feasibility is monotone in the set and in every
/// threshold, so a set is feasible iff it certifies with top thresholds;
/// enumeration stops once k·δ reaches the incumbent.
fn decompose(prep: &[Prepared], spec: &PlacementSpec) -> Result<Found, PlacementError> {
    let o = &spec.options;
    let n = prep[0].n;
    let weight = 1.0 / prep.len() as f64;
    let mut en = Enumerator {
        prep,
        exclude_own: o.exclude_own_bus,
        n,
        sets: 0,
    };
    let all: Vec<usize> = (0..n).collect();
    if en.feasible_top(&all)?.is_some() {
        return Err(PlacementError::Infeasible(worst_bus(prep, o)?));
    }
    let mut best: Option<Found> = None;
    let mut nodes = 0usize;
    let mut worst_gap: f64 = 0.0;
    let mut status = Status::Optimal;
    for k in 0..=n {
        let floor = k as f64 * o.delta;
        if let Some(b) = &best {
            if floor >= b.objective - 1e-12 {
                break;
            }
        }
        let mut visit = |en: &mut Enumerator, set: &[usize]| -> Result<(), PlacementError> {
            let incumbent = best.as_ref().map_or(f64::INFINITY, |b| b.objective);
            let mut slots = Vec::with_capacity(prep.len());
            let mut total = floor;
            for p in prep {
                let bound = threshold_floor(p, set, o.exclude_own_bus, &mut en.sets)?;
                total += weight * p.eps * bound.cost() as f64;
                slots.push(bound);
            }
            if total >= incumbent - 1e-12 {
                return Ok(());
            }
            // Per-sensor minimal slots are jointly feasible in the common
            // case; otherwise solve the fixed-set threshold MILP.
            let mut exact_total = floor;
            for (c, p) in prep.iter().enumerate() {
                en.sets += 1;
                if first_failure(p, set, &slots[c], o.exclude_own_bus, None)?.is_some() {
                    let (sl, r) = fixed_set_milp(p, set, spec, weight)?;
                    nodes += r.nodes;
                    worst_gap = worst_gap.max(r.mip_gap.unwrap_or(0.0));
                    if r.status != Status::Optimal {
                        status = r.status;
                    }
                    slots[c] = sl;
                }
                exact_total += weight * p.eps * slots[c].cost() as f64;
                if exact_total >= incumbent - 1e-12 {
                    return Ok(());
                }
            }
            best = Some(Found {
                set: set.to_vec(),
                levels: prep.iter().zip(&slots).map(|(p, sl)| levels(p, set, sl)).collect(),
                objective: exact_total,
                nodes: 0,
                sets: 0,
                gap: 0.0,
                status: Status::Optimal,
            });
            Ok(())
        };
        let mut prefix = Vec::new();
        en.walk(k, &mut prefix, 0, &mut visit)?;
    }
    let mut f = best.expect("the full set is feasible");
    f.nodes = nodes;
    f.sets = en.sets;
    f.gap = worst_gap;
    f.status = status;
    Ok(f)
}

impl Slots {
    fn cost(&self) -> usize {
        self.lo.iter().chain(&self.hi).sum()
    }
}

/// Per-sensor lower bounds on the slots: the smallest slot of each sensor
/// that certifies with all other thresholds at their top slot.
fn threshold_floor(p: &Prepared, set: &[usize], exclude_own: bool, checks: &mut usize) -> Result<Slots, PlacementError> {
    let top = Slots::top(p, set);
    let mut out = Slots::zero(set);
    for pos in 0..set.len() {
        for side in [Side::Lower, Side::Upper] {
            let hi_t = if side == Side::Lower { top.lo[pos] } else { top.hi[pos] };
            // Smallest t in [0, hi_t] that certifies; hi_t itself does.
            let (mut a, mut b) = (0usize, hi_t);
            while a < b {
                let mid = (a + b) / 2;
                let mut trial = top.clone();
                if side == Side::Lower {
                    trial.lo[pos] = mid;
                } else {
                    trial.hi[pos] = mid;
                }
                *checks += 1;
                if first_failure(p, set, &trial, exclude_own, None)?.is_none() {
                    b = mid;
                } else {
                    a = mid + 1;
                }
            }
            if side == Side::Lower {
                out.lo[pos] = a;
            } else {
                out.hi[pos] = a;
            }
        }
    }
    Ok(out)
}

/// Threshold MILP of one configuration for a fixed sensor set, restricted to
/// the at-risk buses not already certified with every threshold at its limit.
fn fixed_set_milp(p: &Prepared, set: &[usize], spec: &PlacementSpec, weight: f64) -> Result<(Slots, SolveResult), PlacementError> {
    let o = &spec.options;
    let zero = Slots::zero(set);
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    for &i in &p.risk_lo {
        if !o.exclude_own_bus && set.contains(&i) {
            continue;
        }
        if first_failure(p, set, &zero, o.exclude_own_bus, Some((&[i], &[])))?.is_some() {
            lo.push(i);
        }
    }
    for &i in &p.risk_hi {
        if !o.exclude_own_bus && set.contains(&i) {
            continue;
        }
        if first_failure(p, set, &zero, o.exclude_own_bus, Some((&[], &[i])))?.is_some() {
            hi.push(i);
        }
    }
    let probs = Problems { lo: vec![lo], hi: vec![hi] };
    let pm = milp_model(std::slice::from_ref(p), o, &probs, weight, Some(set))?;
    let r = solve_milp_with(&pm.model, &milp_options(spec))?;
    solved(&r)?;
    check_clipped(&pm, &r.x)?;
    let lay = &pm.layout;
    let pick = |etas: &Vec<Vec<lpcore::VarId>>, pos: usize| -> usize {
        etas.get(pos)
            .and_then(|e| e.iter().position(|v| r.x[v.0] > 0.5))
            .unwrap_or(0)
    };
    let slots = Slots {
        lo: (0..set.len()).map(|pos| pick(&lay.eta_lo[0], pos)).collect(),
        hi: (0..set.len()).map(|pos| pick(&lay.eta_hi[0], pos)).collect(),
    };
    Ok((slots, r))
}
