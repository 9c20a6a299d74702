//! Linear and mixed-binary model description.

use serde::{Deserialize, Serialize};

use crate::error::ModelError;

/// Index of a variable inside a [`LinearModel`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VarId(pub usize);

/// Index of a constraint inside a [`LinearModel`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RowId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    #[serde(with = "ext_f64")]
    pub lower: f64,
    #[serde(with = "ext_f64")]
    pub upper: f64,
    pub kind: VarKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = ">=")]
    Ge,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub name: String,
    pub coeffs: Vec<(VarId, f64)>,
    pub relation: Relation,
    #[serde(with = "ext_f64")]
    pub rhs: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub sense: Sense,
    pub coeffs: Vec<(VarId, f64)>,
    pub constant: f64,
}

impl Default for Objective {
    fn default() -> Self {
        Self {
            sense: Sense::Minimize,
            coeffs: Vec::new(),
            constant: 0.0,
        }
    }
}

/// `coeff * x * y` added to the left-hand side of constraint `row`.
///
/// Bilinear terms are carried for exchange only; the simplex and
/// branch-and-bound solvers reject models containing them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BilinearTerm {
    pub row: RowId,
    pub x: VarId,
    pub y: VarId,
    pub coeff: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub name: String,
    pub variables: Vec<Variable>,
    pub constraints: Vec<Constraint>,
    pub objective: Objective,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bilinear: Vec<BilinearTerm>,
}

impl LinearModel {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            ..Default::default()
        }
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn num_rows(&self) -> usize {
        self.constraints.len()
    }

    pub fn num_binaries(&self) -> usize {
        self.variables
            .iter()
            .filter(|v| v.kind == VarKind::Binary)
            .count()
    }

    pub fn has_binaries(&self) -> bool {
        self.variables.iter().any(|v| v.kind == VarKind::Binary)
    }

    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> VarId {
        self.variables.push(Variable {
            name: name.into(),
            lower,
            upper,
            kind: VarKind::Continuous,
        });
        VarId(self.variables.len() - 1)
    }

    pub fn add_binary(&mut self, name: impl Into<String>) -> VarId {
        self.variables.push(Variable {
            name: name.into(),
            lower: 0.0,
            upper: 1.0,
            kind: VarKind::Binary,
        });
        VarId(self.variables.len() - 1)
    }

    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        coeffs: Vec<(VarId, f64)>,
        relation: Relation,
        rhs: f64,
    ) -> RowId {
        self.constraints.push(Constraint {
            name: name.into(),
            coeffs,
            relation,
            rhs,
        });
        RowId(self.constraints.len() - 1)
    }

    pub fn add_bilinear(&mut self, row: RowId, x: VarId, y: VarId, coeff: f64) {
        self.bilinear.push(BilinearTerm { row, x, y, coeff });
    }

    pub fn set_objective(&mut self, sense: Sense, coeffs: Vec<(VarId, f64)>, constant: f64) {
        self.objective = Objective {
            sense,
            coeffs,
            constant,
        };
    }

    pub fn var(&self, id: VarId) -> &Variable {
        &self.variables[id.0]
    }

    pub fn var_mut(&mut self, id: VarId) -> &mut Variable {
        &mut self.variables[id.0]
    }

    /// Objective value of `x` including the constant term.
    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.constant
            + self
                .objective
                .coeffs
                .iter()
                .map(|&(v, c)| c * x[v.0])
                .sum::<f64>()
    }

    /// Left-hand side of every constraint at `x`, bilinear terms included.
    pub fn row_activities(&self, x: &[f64]) -> Vec<f64> {
        let mut act: Vec<f64> = self
            .constraints
            .iter()
            .map(|c| c.coeffs.iter().map(|&(v, a)| a * x[v.0]).sum())
            .collect();
        for t in &self.bilinear {
            act[t.row.0] += t.coeff * x[t.x.0] * x[t.y.0];
        }
        act
    }

    /// Largest bound or row violation of `x` (zero when feasible), ignoring integrality.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0_f64;
        for (v, &xv) in self.variables.iter().zip(x) {
            worst = worst.max(v.lower - xv).max(xv - v.upper);
        }
        for (c, act) in self.constraints.iter().zip(self.row_activities(x)) {
            let viol = match c.relation {
                Relation::Le => act - c.rhs,
                Relation::Ge => c.rhs - act,
                Relation::Eq => (act - c.rhs).abs(),
            };
            worst = worst.max(viol);
        }
        worst
    }

    /// Checks references, bounds and binary domains.
    pub fn validate(&self) -> Result<(), ModelError> {
        let n = self.variables.len();
        for v in &self.variables {
            if v.lower.is_nan() || v.upper.is_nan() || v.lower > v.upper {
                return Err(ModelError::InvalidBounds {
                    var: v.name.clone(),
                    lower: v.lower,
                    upper: v.upper,
                });
            }
            if v.kind == VarKind::Binary && (v.lower < 0.0 || v.upper > 1.0) {
                return Err(ModelError::BinaryDomain(v.name.clone()));
            }
        }
        let check = |id: VarId, ctx: &str| -> Result<(), ModelError> {
            if id.0 >= n {
                Err(ModelError::UnknownVariable {
                    index: id.0,
                    context: ctx.to_string(),
                })
            } else {
                Ok(())
            }
        };
        for c in &self.constraints {
            for &(v, a) in &c.coeffs {
                check(v, &c.name)?;
                if !a.is_finite() {
                    return Err(ModelError::NonFinite(c.name.clone()));
                }
            }
            if c.rhs.is_nan() {
                return Err(ModelError::NonFinite(c.name.clone()));
            }
        }
        for &(v, _) in &self.objective.coeffs {
            check(v, "objective")?;
        }
        for t in &self.bilinear {
            if t.row.0 >= self.constraints.len() {
                return Err(ModelError::UnknownRow(t.row.0));
            }
            check(t.x, "bilinear term")?;
            check(t.y, "bilinear term")?;
        }
        Ok(())
    }
}

/// Serializes infinite values as the strings `"inf"` / `"-inf"` so bounds
/// survive JSON, which has no literal for them.
pub(crate) mod ext_f64 {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else if *v < 0.0 {
            s.serialize_str("-inf")
        } else {
            s.serialize_str("nan")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" | "+inf" | "Infinity" => Ok(f64::INFINITY),
                "-inf" | "-Infinity" => Ok(f64::NEG_INFINITY),
                other => Err(de::Error::custom(format!("invalid number `{other}`"))),
            },
        }
    }
}
