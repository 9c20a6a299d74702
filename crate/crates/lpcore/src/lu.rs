//! Sparse LU factorization of a simplex basis with product-form updates.
//!
//! The basis is factored by right-looking Gaussian elimination with a
//! Markowitz pivot search and threshold partial pivoting. Column
//! replacements after a simplex pivot are appended as eta vectors until the
//! caller decides to refactor.

const PIVOT_THRESHOLD: f64 = 0.01;
const SINGULAR_TOL: f64 = 1e-11;
const DROP_TOL: f64 = 1e-14;
const SEARCH_COLUMNS: usize = 4;

/// Sparse column as parallel index/value arrays.
#[derive(Clone, Debug, Default)]
pub struct SparseCol {
    pub idx: Vec<usize>,
    pub val: Vec<f64>,
}

impl SparseCol {
    pub fn unit(i: usize, v: f64) -> Self {
        Self {
            idx: vec![i],
            val: vec![v],
        }
    }
}

#[derive(Clone, Debug)]
struct Eta {
    pos: usize,
    pivot: f64,
    idx: Vec<usize>,
    val: Vec<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct Factor {
    m: usize,
    // Elimination step k pivots on row piv_row[k] and basis position piv_col[k].
    piv_row: Vec<usize>,
    piv_col: Vec<usize>,
    piv_val: Vec<f64>,
    // Multipliers of step k applied to other rows: x[i] -= l * x[piv_row[k]].
    l_start: Vec<usize>,
    l_idx: Vec<usize>,
    l_val: Vec<f64>,
    // Off-pivot entries of row piv_row[k] of U, indexed by basis position.
    u_start: Vec<usize>,
    u_idx: Vec<usize>,
    u_val: Vec<f64>,
    etas: Vec<Eta>,
}

/// Result of a factorization; `replaced` lists basis positions that were
/// numerically dependent together with the unpivoted row whose logical
/// column should take their place.
pub struct FactorOutcome {
    pub factor: Factor,
    pub replaced: Vec<(usize, usize)>,
}

impl Factor {
    pub fn num_updates(&self) -> usize {
        self.etas.len()
    }

    /// Factors the `m` basis columns. Dependent columns are swapped for unit
    /// columns of leftover rows (sign given by `logical_sign`) so the returned
    /// factor is always nonsingular.
    pub fn factorize(m: usize, cols: &[SparseCol], logical_sign: f64) -> FactorOutcome {
        assert_eq!(cols.len(), m);
        // Active submatrix, row-wise values and column-wise patterns.
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
        let mut colpat: Vec<Vec<usize>> = vec![Vec::new(); m];
        for (j, c) in cols.iter().enumerate() {
            for (&i, &v) in c.idx.iter().zip(&c.val) {
                if v.abs() > DROP_TOL {
                    rows[i].push((j, v));
                    colpat[j].push(i);
                }
            }
        }
        let mut row_done = vec![false; m];
        let mut col_done = vec![false; m];
        let mut col_count: Vec<usize> = colpat.iter().map(|p| p.len()).collect();
        let mut f = Factor {
            m,
            l_start: vec![0],
            u_start: vec![0],
            ..Default::default()
        };
        let mut work = vec![0.0; m];
        let mut mark = vec![false; m];
        let mut dependent: Vec<usize> = Vec::new();

        for _step in 0..m {
            // Candidate columns with the smallest active counts.
            let mut cands: Vec<(usize, usize)> = Vec::with_capacity(SEARCH_COLUMNS + 1);
            for j in 0..m {
                if col_done[j] {
                    continue;
                }
                let c = col_count[j];
                if cands.len() < SEARCH_COLUMNS || c < cands[cands.len() - 1].0 {
                    let at = cands.partition_point(|&(cc, jj)| (cc, jj) < (c, j));
                    cands.insert(at, (c, j));
                    if cands.len() > SEARCH_COLUMNS {
                        cands.pop();
                    }
                }
            }
            if cands.is_empty() {
                break;
            }
            let mut best: Option<(usize, usize, usize, f64)> = None; // (cost, row, col, val)
            let mut empty_cols = Vec::new();
            for &(_, j) in &cands {
                // Gather live entries of column j.
                let mut entries: Vec<(usize, f64)> = Vec::new();
                for &i in &colpat[j] {
                    if row_done[i] {
                        continue;
                    }
                    if let Some(&(_, v)) = rows[i].iter().find(|&&(c, _)| c == j) {
                        if v.abs() > DROP_TOL {
                            entries.push((i, v));
                        }
                    }
                }
                let cmax = entries.iter().fold(0.0_f64, |a, &(_, v)| a.max(v.abs()));
                if cmax <= SINGULAR_TOL {
                    empty_cols.push(j);
                    continue;
                }
                let cc = entries.len();
                for &(i, v) in &entries {
                    if v.abs() < PIVOT_THRESHOLD * cmax {
                        continue;
                    }
                    let rc = rows[i].len();
                    let cost = (rc - 1) * (cc - 1);
                    let better = match best {
                        None => true,
                        Some((bc, bi, bj, bv)) => {
                            cost < bc
                                || (cost == bc && v.abs() > bv.abs() * 1.0000001)
                                || (cost == bc && v.abs() == bv.abs() && (j, i) < (bj, bi))
                        }
                    };
                    if better {
                        best = Some((cost, i, j, v));
                    }
                }
                if matches!(best, Some((0, ..))) {
                    break;
                }
            }
            for j in empty_cols {
                col_done[j] = true;
                dependent.push(j);
            }
            let Some((_, p, q, pv)) = best else {
                continue;
            };
            // Eliminate column q from the other active rows.
            let prow = std::mem::take(&mut rows[p]);
            for &(c, v) in &prow {
                work[c] = v;
                mark[c] = true;
            }
            let others: Vec<usize> = colpat[q]
                .iter()
                .copied()
                .filter(|&i| i != p && !row_done[i])
                .collect();
            for i in others {
                let pos = rows[i].iter().position(|&(c, _)| c == q);
                let Some(pos) = pos else { continue };
                let aiq = rows[i][pos].1;
                rows[i].swap_remove(pos);
                col_count[q] = col_count[q].saturating_sub(1);
                let l = aiq / pv;
                if l.abs() <= DROP_TOL {
                    continue;
                }
                f.l_idx.push(i);
                f.l_val.push(l);
                // row_i -= l * prow (excluding q)
                let mut seen: Vec<usize> = Vec::new();
                let row_i = &mut rows[i];
                let mut k = 0;
                while k < row_i.len() {
                    let c = row_i[k].0;
                    if mark[c] {
                        seen.push(c);
                        row_i[k].1 -= l * work[c];
                        if row_i[k].1.abs() <= DROP_TOL {
                            row_i.swap_remove(k);
                            col_count[c] = col_count[c].saturating_sub(1);
                            continue;
                        }
                    }
                    k += 1;
                }
                for &c in &seen {
                    mark[c] = false;
                }
                for &(c, v) in &prow {
                    if c == q || !mark[c] {
                        continue;
                    }
                    let nv = -l * v;
                    if nv.abs() > DROP_TOL {
                        row_i.push((c, nv));
                        colpat[c].push(i);
                        col_count[c] += 1;
                    }
                }
                for &c in &seen {
                    mark[c] = true;
                }
            }
            for &(c, _) in &prow {
                mark[c] = false;
                work[c] = 0.0;
                if c != q {
                    col_count[c] = col_count[c].saturating_sub(1);
                }
            }
            f.l_start.push(f.l_idx.len());
            for &(c, v) in &prow {
                if c != q {
                    f.u_idx.push(c);
                    f.u_val.push(v);
                }
            }
            f.u_start.push(f.u_idx.len());
            f.piv_row.push(p);
            f.piv_col.push(q);
            f.piv_val.push(pv);
            row_done[p] = true;
            col_done[q] = true;
        }

        // Replace dependent columns by unit columns of unpivoted rows.
        let mut replaced = Vec::new();
        if f.piv_row.len() < m {
            let mut free_rows: Vec<usize> = (0..m).filter(|&i| !row_done[i]).collect();
            free_rows.sort_unstable();
            let mut free_cols: Vec<usize> = (0..m).filter(|&j| !f.piv_col.contains(&j)).collect();
            free_cols.sort_unstable();
            for (&j, &i) in free_cols.iter().zip(&free_rows) {
                f.l_start.push(f.l_idx.len());
                f.u_start.push(f.u_idx.len());
                f.piv_row.push(i);
                f.piv_col.push(j);
                f.piv_val.push(logical_sign);
                replaced.push((j, i));
            }
        }
        debug_assert_eq!(f.piv_row.len(), m);
        if !replaced.is_empty() {
            // Columns that were replaced may still carry entries in rows that
            // pivoted earlier (inside U rows); those are harmless because the
            // replacement column only touches its own row. Remove any U
            // references to replaced columns so solves see the unit column.
            let rep: Vec<bool> = {
                let mut v = vec![false; m];
                for &(j, _) in &replaced {
                    v[j] = true;
                }
                v
            };
            for k in 0..f.u_idx.len() {
                if rep[f.u_idx[k]] {
                    f.u_val[k] = 0.0;
                }
            }
        }
        let _ = dependent;
        FactorOutcome {
            factor: f,
            replaced,
        }
    }

    /// Solves `B x = rhs` in place; on return `rhs` is indexed by basis position.
    pub fn ftran(&self, rhs: &mut [f64]) {
        let n = self.piv_row.len();
        for k in 0..n {
            let xp = rhs[self.piv_row[k]];
            if xp != 0.0 {
                for t in self.l_start[k]..self.l_start[k + 1] {
                    rhs[self.l_idx[t]] -= self.l_val[t] * xp;
                }
            }
        }
        let mut out = vec![0.0; self.m];
        for k in (0..n).rev() {
            let mut s = rhs[self.piv_row[k]];
            for t in self.u_start[k]..self.u_start[k + 1] {
                s -= self.u_val[t] * out[self.u_idx[t]];
            }
            out[self.piv_col[k]] = s / self.piv_val[k];
        }
        for e in &self.etas {
            let xr = out[e.pos] / e.pivot;
            if xr != 0.0 {
                for (&i, &a) in e.idx.iter().zip(&e.val) {
                    out[i] -= a * xr;
                }
            }
            out[e.pos] = xr;
        }
        rhs.copy_from_slice(&out);
    }

    /// Solves `B^T y = rhs` in place; `rhs` is indexed by basis position on
    /// entry and by row on return.
    pub fn btran(&self, rhs: &mut [f64]) {
        for e in self.etas.iter().rev() {
            let mut s = rhs[e.pos];
            for (&i, &a) in e.idx.iter().zip(&e.val) {
                s -= a * rhs[i];
            }
            rhs[e.pos] = s / e.pivot;
        }
        let n = self.piv_row.len();
        let mut w = rhs.to_vec();
        let mut z = vec![0.0; self.m];
        for k in 0..n {
            let t = w[self.piv_col[k]] / self.piv_val[k];
            z[self.piv_row[k]] = t;
            if t != 0.0 {
                for s in self.u_start[k]..self.u_start[k + 1] {
                    w[self.u_idx[s]] -= self.u_val[s] * t;
                }
            }
        }
        for k in (0..n).rev() {
            let mut s = z[self.piv_row[k]];
            for t in self.l_start[k]..self.l_start[k + 1] {
                s -= self.l_val[t] * z[self.l_idx[t]];
            }
            z[self.piv_row[k]] = s;
        }
        rhs.copy_from_slice(&z);
    }

    /// Records the replacement of basis position `pos` by a column whose
    /// FTRAN image is `alpha` (indexed by basis position).
    pub fn update(&mut self, pos: usize, alpha: &[f64]) {
        let mut idx = Vec::new();
        let mut val = Vec::new();
        for (i, &a) in alpha.iter().enumerate() {
            if i != pos && a.abs() > DROP_TOL {
                idx.push(i);
                val.push(a);
            }
        }
        self.etas.push(Eta {
            pos,
            pivot: alpha[pos],
            idx,
            val,
        });
    }
}
