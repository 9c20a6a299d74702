use serde::{Deserialize, Serialize};

use super::{ConfigThresholds, PlacementError, PlacementSolution, SensorThreshold};
use crate::netmodel::{Limits, Network};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeuristicMode {
    /// Leaves of the first configuration only.
    FirstConfig,
    /// Union of the leaves of every configuration.
    AllConfigs,
}

/// End-of-branch placement with thresholds at the voltage limits. The
/// result carries no certification audit.
pub fn heuristic_placement(
    networks: &[(String, Network)],
    mode: HeuristicMode,
    limits: Option<Limits>,
    delta: f64,
) -> Result<PlacementSolution, PlacementError> {
    let Some(first) = networks.first() else {
        return Err(PlacementError::Spec("at least one configuration is required".into()));
    };
    for (name, net) in networks {
        if !net.is_radial() {
            return Err(PlacementError::Layout {
                config: name.clone(),
                msg: "end-of-branch placement needs a radial configuration".into(),
            });
        }
    }
    let mut sensors = first.1.leaf_buses();
    if mode == HeuristicMode::AllConfigs {
        for (_, net) in &networks[1..] {
            sensors.extend(net.leaf_buses());
        }
        sensors.sort_unstable();
        sensors.dedup();
    }
    let thresholds: Vec<ConfigThresholds> = networks
        .iter()
        .map(|(name, net)| ConfigThresholds {
            config: name.clone(),
            sensors: sensors
                .iter()
                .map(|&b| {
                    let (lo, hi) = match limits {
                        Some(l) => (l.v_min, l.v_max),
                        None => {
                            let bus = &net.buses[net.index_of(b).expect("leaf bus exists")];
                            (bus.v_min, bus.v_max)
                        }
                    };
                    SensorThreshold {
                        bus: b,
                        lower: lo,
                        upper: hi,
                        v_min: lo,
                        v_max: hi,
                    }
                })
                .collect(),
        })
        .collect();
    Ok(PlacementSolution {
        objective: super::cost(&thresholds, delta),
        sensors,
        thresholds,
        audit: Vec::new(),
        solver: None,
    })
}
