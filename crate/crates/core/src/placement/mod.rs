//! Voltage-sensor placement from conservative linear approximations.
//!
//! The bilevel problem (choose sensors and alarm thresholds so that no
//! violation can go unnoticed) is turned into single-level models in three
//! ways: KKT conditions with big-M complementarity, LP duality with bilinear
//! threshold-dual products, and a discretized MILP where the threshold grid
//! makes every product a binary times a bounded dual.

mod build;
mod dual;
mod heuristic;
mod prepare;
mod search;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cla::{ClaBundle, OutputKind};
use crate::netmodel::Network;
use crate::sampling::{InjectionRange, SampleSet};

pub use build::{build_bilinear, build_kkt, build_milp, model_stats, CategoryCount, ModelStats, PlacementModel};
pub use dual::{audit_solution, build_dual_data, DualColumn, DualData};
pub use heuristic::{heuristic_placement, HeuristicMode};
pub use search::solve_placement;

#[derive(Debug, Error)]
pub enum PlacementError {
    #[error("invalid placement spec: {0}")]
    Spec(String),
    #[error("configuration {config}: {msg}")]
    Layout { config: String, msg: String },
    #[error(transparent)]
    Model(#[from] lpcore::ModelError),
    #[error("lower-level LP for bus {bus} in {config} ended with {status:?}")]
    Lp {
        config: String,
        bus: usize,
        status: lpcore::Status,
    },
    #[error("{0}")]
    Infeasible(InfeasibilityReport),
    #[error("dual variable {name} sits at its bound {bound}; raise dual_bound and re-solve")]
    DualBoundActive { name: String, bound: f64 },
    #[error("solver stopped with {status:?} before finding a placement")]
    Solver { status: lpcore::Status },
    #[error("KKT model with b*r = {size} exceeds the guard of {guard}")]
    KktGuard { size: usize, guard: usize },
    #[error("the bilinear model has no internal solver; export it or enable the discretized fallback")]
    ExportOnly,
    #[error("audit failed in {config}: bus {bus} certified [{lower:.6}, {upper:.6}] outside its limits")]
    Audit {
        config: String,
        bus: usize,
        lower: f64,
        upper: f64,
    },
}

/// Which limit cannot be certified even with a sensor at every bus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfeasibilityReport {
    pub config: String,
    pub bus: usize,
    pub side: LimitSide,
    /// Best certified bound in voltage magnitude.
    pub bound: f64,
    pub limit: f64,
}

impl std::fmt::Display for InfeasibilityReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "no placement certifies {}: bus {} {:?} bound {:.6} vs limit {:.6} with sensors everywhere",
            self.config, self.bus, self.side, self.bound, self.limit
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitSide {
    Lower,
    Upper,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formulation {
    Kkt,
    Bilinear,
    #[default]
    Milp,
}

impl std::fmt::Display for Formulation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Formulation::Kkt => "kkt",
            Formulation::Bilinear => "bilinear",
            Formulation::Milp => "milp",
        })
    }
}

/// How the discretized model is solved.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Enumerate sensor sets by cardinality; thresholds of each feasible set
    /// come from a per-configuration MILP with the sensor binaries fixed.
    #[default]
    Decomposition,
    /// Branch and bound on the full model.
    Monolithic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlacementOptions {
    pub formulation: Formulation,
    pub delta: f64,
    /// Translation constant for absent upper thresholds, in pu voltage.
    pub big_m: f64,
    pub epsilon: f64,
    pub steps: usize,
    pub bvr: bool,
    pub dual_bound: f64,
    pub kkt_big_m: f64,
    pub mip_gap: f64,
    pub node_limit: usize,
    pub exclude_own_bus: bool,
    pub strategy: Strategy,
    /// Grid step used when the bilinear model is solved through the MILP.
    pub fine_epsilon: f64,
    pub discretize_fallback: bool,
    /// At-risk margin; defaults to 2ε.
    pub risk_margin: Option<f64>,
    /// Largest b*r for which the KKT model is solved internally.
    pub kkt_guard: usize,
}

impl Default for PlacementOptions {
    fn default() -> Self {
        Self {
            formulation: Formulation::Milp,
            delta: 0.02,
            big_m: 2.0,
            epsilon: 5e-4,
            steps: 41,
            bvr: true,
            dual_bound: 1e3,
            kkt_big_m: 10.0,
            mip_gap: 0.005,
            node_limit: 200_000,
            exclude_own_bus: false,
            strategy: Strategy::Decomposition,
            fine_epsilon: 1e-4,
            discretize_fallback: false,
            risk_margin: None,
            kkt_guard: 50,
        }
    }
}

impl PlacementOptions {
    pub fn validate(&self) -> Result<(), PlacementError> {
        let bad = |m: &str| Err(PlacementError::Spec(m.to_string()));
        if !(self.epsilon > 0.0) || !(self.fine_epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        if self.steps < 2 {
            return bad("steps must be at least 2");
        }
        if !(self.delta >= 0.0) {
            return bad("delta must be nonnegative");
        }
        if !(self.dual_bound > 0.0) || !(self.kkt_big_m > 0.0) {
            return bad("dual and complementarity bounds must be positive");
        }
        if !(self.mip_gap >= 0.0) {
            return bad("mip gap must be nonnegative");
        }
        Ok(())
    }

    pub fn margin(&self) -> f64 {
        self.risk_margin.unwrap_or(2.0 * self.epsilon)
    }
}

/// Everything the optimization needs about one configuration.
#[derive(Clone, Debug)]
pub struct ConfigInput {
    pub name: String,
    pub bundle: ClaBundle,
    pub range: InjectionRange,
    /// (V_min, V_max) per PQ bus, aligned with `bundle.pq_ids`.
    pub limits: Vec<(f64, f64)>,
    /// Sampled (min, max) voltage per PQ bus, used for at-risk detection and BVR.
    pub extremes: Vec<(f64, f64)>,
}

impl ConfigInput {
    pub fn new(net: &Network, bundle: ClaBundle, range: InjectionRange, samples: &SampleSet) -> Result<Self, PlacementError> {
        let ids = net.pq_ids();
        if ids != bundle.pq_ids || ids != samples.pq_ids || range.len() != ids.len() {
            return Err(PlacementError::Layout {
                config: bundle.config.clone(),
                msg: "network, CLA bundle, range and samples disagree on the PQ buses".into(),
            });
        }
        let limits = net
            .pq_indices()
            .iter()
            .map(|&i| (net.buses[i].v_min, net.buses[i].v_max))
            .collect();
        Ok(Self {
            name: bundle.config.clone(),
            extremes: samples.pq_extremes(),
            bundle,
            range,
            limits,
        })
    }

    pub fn kind(&self) -> OutputKind {
        self.bundle.output_kind
    }
}

#[derive(Clone, Debug)]
pub struct PlacementSpec {
    pub configs: Vec<ConfigInput>,
    pub options: PlacementOptions,
}

impl PlacementSpec {
    pub fn validate(&self) -> Result<(), PlacementError> {
        self.options.validate()?;
        let Some(first) = self.configs.first() else {
            return Err(PlacementError::Spec("at least one configuration is required".into()));
        };
        for c in &self.configs {
            let n = c.bundle.pq_ids.len();
            if c.bundle.pq_ids != first.bundle.pq_ids {
                return Err(PlacementError::Layout {
                    config: c.name.clone(),
                    msg: "PQ buses differ from the first configuration".into(),
                });
            }
            if c.limits.len() != n || c.extremes.len() != n || c.range.len() != n || c.bundle.pairs.len() != n {
                return Err(PlacementError::Layout {
                    config: c.name.clone(),
                    msg: "per-bus vectors have inconsistent lengths".into(),
                });
            }
            for (k, p) in c.bundle.pairs.iter().enumerate() {
                if p.over.a1.len() != 2 * n || p.under.a1.len() != 2 * n {
                    return Err(PlacementError::Layout {
                        config: c.name.clone(),
                        msg: format!("CLA of bus {} has the wrong dimension", c.bundle.pq_ids[k]),
                    });
                }
            }
            for &(lo, hi) in &c.limits {
                if !(lo < hi) || hi >= self.options.big_m {
                    return Err(PlacementError::Spec(format!(
                        "limits [{lo}, {hi}] must be ordered and below the translation constant"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorThreshold {
    pub bus: usize,
    /// Alarm when the voltage drops below this value.
    pub lower: f64,
    /// Alarm when the voltage rises above this value.
    pub upper: f64,
    pub v_min: f64,
    pub v_max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigThresholds {
    pub config: String,
    pub sensors: Vec<SensorThreshold>,
}

impl ConfigThresholds {
    pub fn get(&self, bus: usize) -> Option<&SensorThreshold> {
        self.sensors.iter().find(|s| s.bus == bus)
    }
}

/// Certified voltage range of one bus under a placement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
/// Vacuous bounds (no injection matches the readings) are reported as the
/// translation constant and zero.
pub struct BusCertificate {
    pub bus: usize,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub ok: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigAudit {
    pub config: String,
    pub buses: Vec<BusCertificate>,
}

impl ConfigAudit {
    pub fn passed(&self) -> bool {
        self.buses.iter().all(|b| b.ok)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtRisk {
    pub config: String,
    pub lower: Vec<usize>,
    pub upper: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverInfo {
    pub formulation: Formulation,
    pub strategy: Strategy,
    pub status: String,
    pub b: usize,
    /// Number of lower-level problems over all configurations.
    pub r: usize,
    pub at_risk: Vec<AtRisk>,
    pub epsilon: f64,
    pub nodes: usize,
    pub sets_examined: usize,
    pub closure_rounds: usize,
    pub mip_gap: f64,
    #[serde(skip)]
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlacementSolution {
    /// Sensor buses, shared by all configurations.
    pub sensors: Vec<usize>,
    pub thresholds: Vec<ConfigThresholds>,
    pub objective: f64,
    #[serde(default)]
    pub audit: Vec<ConfigAudit>,
    #[serde(default)]
    pub solver: Option<SolverInfo>,
}

impl PlacementSolution {
    pub fn for_config(&self, name: &str) -> Option<&ConfigThresholds> {
        self.thresholds.iter().find(|t| t.config == name)
    }

    pub fn audit_passed(&self) -> bool {
        !self.audit.is_empty() && self.audit.iter().all(ConfigAudit::passed)
    }
}

/// Sensor cost: δ per sensor plus the threshold restrictiveness, averaged
/// over configurations.
pub fn cost(thresholds: &[ConfigThresholds], delta: f64) -> f64 {
    let Some(first) = thresholds.first() else {
        return 0.0;
    };
    let n = first.sensors.len() as f64;
    let spread: f64 = thresholds
        .iter()
        .flat_map(|c| c.sensors.iter())
        .map(|s| (s.lower - s.v_min) + (s.v_max - s.upper))
        .sum();
    n * delta + spread / thresholds.len() as f64
}
