mod common;

use common::{random_lp, vertex_enum};
use lpcore::{solve_lp, LinearModel, Relation, Sense, Status};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn bound_row_dual_is_one() {
    let mut m = LinearModel::new("t");
    let x = m.add_var("x", f64::NEG_INFINITY, f64::INFINITY);
    m.add_constraint("lim", vec![(x, 1.0)], Relation::Ge, 3.0);
    m.set_objective(Sense::Minimize, vec![(x, 1.0)], 0.0);
    let r = solve_lp(&m).unwrap();
    assert_eq!(r.status, Status::Optimal);
    assert!((r.x[0] - 3.0).abs() < 1e-12);
    assert!((r.duals.unwrap()[0] - 1.0).abs() < 1e-12);
}

#[test]
fn maximize_dual_sign() {
    // max x s.t. x <= 4: raising the rhs raises the objective.
    let mut m = LinearModel::new("t");
    let x = m.add_var("x", 0.0, f64::INFINITY);
    m.add_constraint("cap", vec![(x, 1.0)], Relation::Le, 4.0);
    m.set_objective(Sense::Maximize, vec![(x, 2.0)], 1.0);
    let r = solve_lp(&m).unwrap();
    assert!((r.objective - 9.0).abs() < 1e-12);
    assert!((r.duals.unwrap()[0] - 2.0).abs() < 1e-12);
}

#[test]
fn infeasible_pair() {
    let mut m = LinearModel::new("t");
    let x = m.add_var("x", f64::NEG_INFINITY, f64::INFINITY);
    m.add_constraint("a", vec![(x, 1.0)], Relation::Ge, 1.0);
    m.add_constraint("b", vec![(x, 1.0)], Relation::Le, 0.0);
    let r = solve_lp(&m).unwrap();
    assert_eq!(r.status, Status::Infeasible);
}

#[test]
fn unbounded_ray() {
    let mut m = LinearModel::new("t");
    let x = m.add_var("x", 0.0, f64::INFINITY);
    let y = m.add_var("y", 0.0, f64::INFINITY);
    m.add_constraint("a", vec![(x, 1.0), (y, -1.0)], Relation::Le, 1.0);
    m.set_objective(Sense::Minimize, vec![(x, -1.0)], 0.0);
    assert_eq!(solve_lp(&m).unwrap().status, Status::Unbounded);
}

#[test]
fn rejects_binaries() {
    let mut m = LinearModel::new("t");
    m.add_binary("b");
    assert!(solve_lp(&m).is_err());
}

#[test]
fn free_and_boxed_variables() {
    // min |x - 2| style: x free, t >= x - 2, t >= 2 - x, y boxed in [-1, 1] pushed to -1.
    let mut m = LinearModel::new("t");
    let x = m.add_var("x", f64::NEG_INFINITY, f64::INFINITY);
    let t = m.add_var("t", f64::NEG_INFINITY, f64::INFINITY);
    let y = m.add_var("y", -1.0, 1.0);
    m.add_constraint("p", vec![(t, 1.0), (x, -1.0)], Relation::Ge, -2.0);
    m.add_constraint("n", vec![(t, 1.0), (x, 1.0)], Relation::Ge, 2.0);
    m.set_objective(Sense::Minimize, vec![(t, 1.0), (y, 3.0)], 0.0);
    let r = solve_lp(&m).unwrap();
    assert_eq!(r.status, Status::Optimal);
    assert!((r.objective + 3.0).abs() < 1e-10);
    assert!((r.x[2] + 1.0).abs() < 1e-12);
}

fn check_kkt(m: &LinearModel, r: &lpcore::SolveResult) {
    let x = &r.x;
    assert!(m.max_violation(x) <= 1e-7, "primal violation {}", m.max_violation(x));
    let y = r.duals.as_ref().unwrap();
    let act = m.row_activities(x);
    let flip = if m.objective.sense == Sense::Maximize { -1.0 } else { 1.0 };
    for (i, c) in m.constraints.iter().enumerate() {
        let yi = flip * y[i];
        match c.relation {
            Relation::Ge => assert!(yi >= -1e-7),
            Relation::Le => assert!(yi <= 1e-7),
            Relation::Eq => {}
        }
        // complementary slackness
        assert!((yi * (act[i] - c.rhs)).abs() <= 1e-6, "cs row {i}");
    }
    // reduced costs and strong duality
    let mut obj_c = vec![0.0; m.num_vars()];
    for &(v, c) in &m.objective.coeffs {
        obj_c[v.0] += c;
    }
    let mut dual_obj = m.objective.constant;
    for (i, c) in m.constraints.iter().enumerate() {
        dual_obj += y[i] * c.rhs;
    }
    for j in 0..m.num_vars() {
        let mut d = obj_c[j];
        for (i, c) in m.constraints.iter().enumerate() {
            for &(v, a) in &c.coeffs {
                if v.0 == j {
                    d -= y[i] * a;
                }
            }
        }
        let v = m.var(lpcore::VarId(j));
        let dm = flip * d;
        if dm > 1e-7 {
            assert!((x[j] - v.lower).abs() <= 1e-7);
            dual_obj += d * v.lower;
        } else if dm < -1e-7 {
            assert!((x[j] - v.upper).abs() <= 1e-7);
            dual_obj += d * v.upper;
        }
    }
    let scale = r.objective.abs().max(1.0);
    assert!(
        (dual_obj - r.objective).abs() <= 1e-8 * scale,
        "strong duality {} vs {}",
        dual_obj,
        r.objective
    );
}

#[test]
fn random_lps_match_vertex_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut feasible = 0;
    for k in 0..200 {
        let lp = random_lp(&mut rng, 8, 12);
        let sense = if k % 3 == 0 { Sense::Maximize } else { Sense::Minimize };
        let model = lp.to_model(sense);
        let r = solve_lp(&model).unwrap();
        let oracle = vertex_enum(&lp);
        match oracle {
            None => assert_eq!(r.status, Status::Infeasible, "instance {k}"),
            Some(v) => {
                feasible += 1;
                assert_eq!(r.status, Status::Optimal, "instance {k}");
                let got = if sense == Sense::Maximize { -r.objective } else { r.objective };
                assert!((got - v).abs() <= 1e-6 * v.abs().max(1.0), "instance {k}: {got} vs {v}");
                check_kkt(&model, &r);
            }
        }
    }
    assert!(feasible > 100, "too few feasible instances: {feasible}");
}

#[test]
fn degenerate_lp_terminates() {
    // Many redundant constraints through the optimal vertex.
    let mut m = LinearModel::new("deg");
    let n = 6;
    let v: Vec<_> = (0..n).map(|j| m.add_var(format!("x{j}"), 0.0, f64::INFINITY)).collect();
    for i in 0..40 {
        let coeffs = v
            .iter()
            .enumerate()
            .map(|(j, &id)| (id, 1.0 + ((i * 7 + j * 3) % 5) as f64))
            .collect();
        m.add_constraint(format!("r{i}"), coeffs, Relation::Le, 0.0);
    }
    m.set_objective(Sense::Maximize, v.iter().map(|&id| (id, 1.0)).collect(), 0.0);
    let r = solve_lp(&m).unwrap();
    assert_eq!(r.status, Status::Optimal);
    assert!(r.objective.abs() < 1e-12);
}

#[test]
fn warm_start_after_bound_change() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..30 {
        let lp = random_lp(&mut rng, 6, 8);
        let model = lp.to_model(Sense::Minimize);
        let mut s = lpcore::LpSolver::new(&model).unwrap();
        if s.solve() != lpcore::LpStatus::Optimal {
            continue;
        }
        let x = s.primal_values();
        let j = (0..x.len()).max_by(|&a, &b| x[a].total_cmp(&x[b])).unwrap();
        let cap = x[j] * 0.5;
        s.set_bounds(j, 0.0, cap);
        let st = s.solve();
        let mut fresh_model = model.clone();
        fresh_model.variables[j].upper = cap;
        let fresh = solve_lp(&fresh_model).unwrap();
        match st {
            lpcore::LpStatus::Optimal => {
                assert_eq!(fresh.status, Status::Optimal);
                assert!((s.objective() - fresh.objective).abs() < 1e-7);
            }
            lpcore::LpStatus::Infeasible => assert_eq!(fresh.status, Status::Infeasible),
            other => panic!("unexpected {other:?}"),
        }
    }
}

#[test]
fn single_point_relaxation_after_partial_flips() {
    // Boxed columns with wrong-signed costs next to an unbounded one; the
    // only feasible point is (1, 1, 0, 0).
    let mut m = LinearModel::new("point");
    let b0 = m.add_var("b0", 0.0, 1.0);
    let b1 = m.add_var("b1", 0.0, 1.0);
    let c0 = m.add_var("c0", 0.0, f64::INFINITY);
    let c1 = m.add_var("c1", 0.0, f64::INFINITY);
    m.add_constraint("r0", vec![(c0, 1.0), (c1, 1.0)], Relation::Le, 6.0);
    m.add_constraint("r1", vec![(b0, 2.0), (b1, 4.0), (c0, -3.0), (c1, -1.0)], Relation::Ge, 6.0);
    m.add_constraint("r2", vec![(b1, 6.0), (c0, 2.0)], Relation::Le, 8.0);
    m.set_objective(Sense::Minimize, vec![(b0, 3.2903073063643404), (b1, -5.611850762016339), (c0, -5.718005322133182), (c1, 2.1271393684262847)], 0.0);
    let r = solve_lp(&m).unwrap();
    assert_eq!(r.status, Status::Optimal);
    assert!((r.objective - (3.2903073063643404 - 5.611850762016339)).abs() < 1e-12);
}
