#![allow(dead_code)]

use lpcore::{LinearModel, Relation, Sense, VarId};
use rand::Rng;

/// Dense LP `min c^T x` s.t. rows `a x (rel) b`, `x >= 0`.
#[derive(Clone, Debug)]
pub struct DenseLp {
    pub c: Vec<f64>,
    pub a: Vec<Vec<f64>>,
    pub rel: Vec<Relation>,
    pub b: Vec<f64>,
}

impl DenseLp {
    pub fn to_model(&self, sense: Sense) -> LinearModel {
        let mut m = LinearModel::new("dense");
        let n = self.c.len();
        let vars: Vec<VarId> = (0..n)
            .map(|j| m.add_var(format!("x{j}"), 0.0, f64::INFINITY))
            .collect();
        for (i, row) in self.a.iter().enumerate() {
            let coeffs = row
                .iter()
                .enumerate()
                .filter(|(_, &v)| v != 0.0)
                .map(|(j, &v)| (vars[j], v))
                .collect();
            m.add_constraint(format!("r{i}"), coeffs, self.rel[i], self.b[i]);
        }
        let s = if sense == Sense::Maximize { -1.0 } else { 1.0 };
        m.set_objective(
            sense,
            self.c.iter().enumerate().map(|(j, &v)| (vars[j], s * v)).collect(),
            0.0,
        );
        m
    }
}

fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs()))?;
        if a[p][k].abs() < 1e-10 {
            return None;
        }
        a.swap(k, p);
        b.swap(k, p);
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            if f != 0.0 {
                for j in k..n {
                    a[i][j] -= f * a[k][j];
                }
                b[i] -= f * b[k];
            }
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let mut s = b[k];
        for j in k + 1..n {
            s -= a[k][j] * x[j];
        }
        x[k] = s / a[k][k];
    }
    Some(x)
}

/// Minimum over all basic feasible solutions, or `None` if there is none.
/// Assumes the feasible region is bounded.
pub fn vertex_enum(lp: &DenseLp) -> Option<f64> {
    let m = lp.b.len();
    let n = lp.c.len();
    // Equality form with slack columns.
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| (0..m).map(|i| lp.a[i][j]).collect()).collect();
    let mut cost = lp.c.clone();
    for i in 0..m {
        let s = match lp.rel[i] {
            Relation::Le => 1.0,
            Relation::Ge => -1.0,
            Relation::Eq => continue,
        };
        let mut col = vec![0.0; m];
        col[i] = s;
        cols.push(col);
        cost.push(0.0);
    }
    let total = cols.len();
    if m == 0 {
        return Some(0.0);
    }
    let mut best: Option<f64> = None;
    let mut idx: Vec<usize> = (0..m).collect();
    if m > total {
        return None;
    }
    loop {
        let a: Vec<Vec<f64>> = (0..m).map(|i| idx.iter().map(|&j| cols[j][i]).collect()).collect();
        if let Some(x) = solve_dense(a, lp.b.clone()) {
            let resid_ok = (0..m).all(|i| {
                let s: f64 = idx.iter().zip(&x).map(|(&j, v)| cols[j][i] * v).sum();
                (s - lp.b[i]).abs() < 1e-7
            });
            if resid_ok && x.iter().all(|&v| v >= -1e-9) {
                let obj: f64 = idx.iter().zip(&x).map(|(&j, v)| cost[j] * v).sum();
                best = Some(best.map_or(obj, |b: f64| b.min(obj)));
            }
        }
        // next combination
        let mut k = m;
        loop {
            if k == 0 {
                return best;
            }
            k -= 1;
            if idx[k] < total - m + k {
                idx[k] += 1;
                for t in k + 1..m {
                    idx[t] = idx[t - 1] + 1;
                }
                break;
            }
        }
    }
}

pub fn random_lp<R: Rng>(rng: &mut R, m: usize, n: usize) -> DenseLp {
    let mut a = Vec::new();
    let mut rel = Vec::new();
    let mut b = Vec::new();
    // Bounding row keeps the region compact.
    a.push(vec![1.0; n]);
    rel.push(Relation::Le);
    b.push(10.0);
    for _ in 1..m {
        let row: Vec<f64> = (0..n)
            .map(|_| {
                if rng.gen_bool(0.6) {
                    (rng.gen_range(-5.0..5.0_f64) * 4.0).round() / 4.0
                } else {
                    0.0
                }
            })
            .collect();
        let r = match rng.gen_range(0..10) {
            0 => Relation::Eq,
            1..=3 => Relation::Ge,
            _ => Relation::Le,
        };
        a.push(row);
        rel.push(r);
        b.push((rng.gen_range(-2.0..8.0_f64) * 2.0).round() / 2.0);
    }
    let c = (0..n)
        .map(|_| (rng.gen_range(-5.0..5.0_f64) * 4.0).round() / 4.0)
        .collect();
    DenseLp { c, a, rel, b }
}

/// Random MILP with up to 12 binaries and a bounded continuous part.
pub struct RandMilp {
    pub k: usize,
    pub nc: usize,
    pub c: Vec<f64>,
    pub a: Vec<Vec<f64>>,
    pub rel: Vec<Relation>,
    pub b: Vec<f64>,
}

pub fn random_milp<R: Rng>(rng: &mut R) -> RandMilp {
    let k = rng.gen_range(1..=12);
    let nc = rng.gen_range(0..=3);
    let n = k + nc;
    let m = rng.gen_range(2..=5);
    let mut a = Vec::new();
    let mut rel = Vec::new();
    let mut b = Vec::new();
    // Bound the continuous part.
    let mut row = vec![0.0; n];
    for v in row.iter_mut().skip(k) {
        *v = 1.0;
    }
    a.push(row);
    rel.push(Relation::Le);
    b.push(6.0);
    for _ in 1..m {
        let row: Vec<f64> = (0..n)
            .map(|_| if rng.gen_bool(0.7) { rng.gen_range(-4i32..=6) as f64 } else { 0.0 })
            .collect();
        let r = if rng.gen_bool(0.25) { Relation::Ge } else { Relation::Le };
        a.push(row);
        rel.push(r);
        b.push(rng.gen_range(-2i32..=10) as f64);
    }
    let c = (0..n).map(|_| rng.gen_range(-6i32..=6) as f64 + rng.gen_range(0.0..0.5)).collect();
    RandMilp { k, nc, c, a, rel, b }
}

pub fn to_model(p: &RandMilp) -> LinearModel {
    let mut m = LinearModel::new("milp");
    let mut ids: Vec<VarId> = Vec::new();
    for j in 0..p.k {
        ids.push(m.add_binary(format!("b{j}")));
    }
    for j in 0..p.nc {
        ids.push(m.add_var(format!("c{j}"), 0.0, f64::INFINITY));
    }
    for (i, row) in p.a.iter().enumerate() {
        let co = row.iter().enumerate().filter(|(_, &v)| v != 0.0).map(|(j, &v)| (ids[j], v)).collect();
        m.add_constraint(format!("r{i}"), co, p.rel[i], p.b[i]);
    }
    m.set_objective(Sense::Minimize, ids.iter().zip(&p.c).map(|(&v, &c)| (v, c)).collect(), 0.0);
    m
}

/// Exhaustive enumeration over binaries with a vertex-enumeration LP for the rest.
pub fn enumerate(p: &RandMilp) -> Option<f64> {
    let mut best: Option<f64> = None;
    for mask in 0u32..(1 << p.k) {
        let bits: Vec<f64> = (0..p.k).map(|j| ((mask >> j) & 1) as f64).collect();
        let fixed_obj: f64 = bits.iter().zip(&p.c).map(|(x, c)| x * c).sum();
        let b: Vec<f64> = p
            .a
            .iter()
            .zip(&p.b)
            .map(|(row, &bi)| bi - row.iter().zip(&bits).map(|(a, x)| a * x).sum::<f64>())
            .collect();
        let val = if p.nc == 0 {
            let ok = p.rel.iter().zip(&b).all(|(r, &bi)| match r {
                Relation::Le => 0.0 <= bi + 1e-9,
                Relation::Ge => 0.0 >= bi - 1e-9,
                Relation::Eq => bi.abs() < 1e-9,
            });
            ok.then_some(0.0)
        } else {
            let lp = DenseLp {
                c: p.c[p.k..].to_vec(),
                a: p.a.iter().map(|r| r[p.k..].to_vec()).collect(),
                rel: p.rel.clone(),
                b,
            };
            vertex_enum(&lp)
        };
        if let Some(v) = val {
            let tot = fixed_obj + v;
            best = Some(best.map_or(tot, |bb: f64| bb.min(tot)));
        }
    }
    best
}
