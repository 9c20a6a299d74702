//! Voltage-sensor placement for distribution feeders: network models, AC
//! power flow, conservative linear approximations, single-level placement
//! models, threshold refinement and Monte Carlo validation.

pub mod netmodel;
pub mod powerflow;
pub mod sampling;
pub mod cla;
pub mod placement;
pub mod validate;
pub mod agd;
