use crate::error::ModelError;
use crate::model::{LinearModel, Relation, VarId, VarKind};

/// Adds `z = x * y` for binary `y` and bounded continuous `x` through the four
/// McCormick rows, which are exact when `y` is integral. Returns `z`.
pub fn add_binary_product(
    m: &mut LinearModel,
    name: &str,
    x: VarId,
    y: VarId,
) -> Result<VarId, ModelError> {
    let xv = m.var(x);
    let (lo, hi) = (xv.lower, xv.upper);
    if !lo.is_finite() || !hi.is_finite() {
        return Err(ModelError::UnboundedFactor(xv.name.clone()));
    }
    if m.var(y).kind != VarKind::Binary {
        return Err(ModelError::NotBinary(m.var(y).name.clone()));
    }
    let z = m.add_var(name, lo.min(0.0), hi.max(0.0));
    // z <= U y ; z >= L y
    m.add_constraint(
        format!("{name}_ub_y"),
        vec![(z, 1.0), (y, -hi)],
        Relation::Le,
        0.0,
    );
    m.add_constraint(
        format!("{name}_lb_y"),
        vec![(z, 1.0), (y, -lo)],
        Relation::Ge,
        0.0,
    );
    // z <= x - L (1 - y) ; z >= x - U (1 - y)
    m.add_constraint(
        format!("{name}_ub_x"),
        vec![(z, 1.0), (x, -1.0), (y, -lo)],
        Relation::Le,
        -lo,
    );
    m.add_constraint(
        format!("{name}_lb_x"),
        vec![(z, 1.0), (x, -1.0), (y, -hi)],
        Relation::Ge,
        -hi,
    );
    Ok(z)
}
