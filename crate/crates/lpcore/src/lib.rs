//! Self-contained LP/MILP toolkit: model description, bounded revised
//! simplex, best-bound branch and bound, McCormick products for binaries and
//! model export (fixed MPS and a JSON exchange format).

pub mod envelope;
pub mod error;
pub mod export;
pub mod lu;
pub mod milp;
pub mod model;
pub mod simplex;

use serde::{Deserialize, Serialize};

pub use envelope::add_binary_product;
pub use error::{ExportError, ModelError};
pub use export::{export_model, import_model_json, structure_hash, ExportFormat};
pub use milp::{solve_milp, solve_milp_with, Branching, MilpOptions};
pub use model::{
    BilinearTerm, Constraint, LinearModel, Objective, Relation, RowId, Sense, VarId, VarKind,
    Variable,
};
pub use simplex::{Basis, LpSolver, LpStatus};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    /// Search stopped with an incumbent whose proven relative gap is within tolerance.
    GapLimit,
    /// Iteration or node budget exhausted; `x` holds the incumbent if one exists.
    IterationLimit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub status: Status,
    /// Primal values; empty when no feasible point is known.
    pub x: Vec<f64>,
    /// Row duals as objective sensitivity to the right-hand side (LP only).
    pub duals: Option<Vec<f64>>,
    pub reduced_costs: Option<Vec<f64>>,
    pub objective: f64,
    /// Best proven bound on the objective (equals `objective` for LPs).
    pub bound: f64,
    pub mip_gap: Option<f64>,
    pub nodes: usize,
    pub iterations: usize,
}

impl SolveResult {
    pub fn has_solution(&self) -> bool {
        !self.x.is_empty()
    }

    fn without_solution(status: Status, iterations: usize) -> Self {
        Self {
            status,
            x: Vec::new(),
            duals: None,
            reduced_costs: None,
            objective: f64::NAN,
            bound: f64::NAN,
            mip_gap: None,
            nodes: 0,
            iterations,
        }
    }
}

/// Solves a model without binaries.
pub fn solve_lp(m: &LinearModel) -> Result<SolveResult, ModelError> {
    if m.has_binaries() {
        return Err(ModelError::HasBinaries);
    }
    solve_relaxation(m)
}

/// Solves the continuous relaxation of `m` (binaries treated as [0,1]).
pub fn solve_relaxation(m: &LinearModel) -> Result<SolveResult, ModelError> {
    let mut lp = LpSolver::new(m)?;
    let st = lp.solve();
    Ok(lp_result(&lp, st))
}

pub(crate) fn lp_result(lp: &LpSolver, st: LpStatus) -> SolveResult {
    match st {
        LpStatus::Optimal => {
            let obj = lp.objective();
            SolveResult {
                status: Status::Optimal,
                x: lp.primal_values(),
                duals: Some(lp.row_duals()),
                reduced_costs: Some(lp.reduced_costs()),
                objective: obj,
                bound: obj,
                mip_gap: None,
                nodes: 0,
                iterations: lp.iterations(),
            }
        }
        LpStatus::Infeasible => SolveResult::without_solution(Status::Infeasible, lp.iterations()),
        LpStatus::Unbounded => SolveResult::without_solution(Status::Unbounded, lp.iterations()),
        LpStatus::IterationLimit => {
            SolveResult::without_solution(Status::IterationLimit, lp.iterations())
        }
    }
}
