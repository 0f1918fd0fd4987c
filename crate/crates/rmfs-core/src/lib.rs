//! Planning stack for robotic mobile fulfillment systems: collision-aware
//! space-time routing, an energy-minimizing collision priority rule,
//! multi-objective task assignment (NSGA-II and ALNS), a schedule simulator
//! scoring four objectives, Pareto-front quality metrics, and an exhaustive
//! exact Pareto oracle for small instances.

pub mod metrics;
pub mod oracle;
pub mod priority;
pub mod router;
pub mod scenario;
pub mod search;
pub mod sim;
