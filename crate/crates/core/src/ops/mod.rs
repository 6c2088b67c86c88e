//! Deployment cost, serving capacity and load-test accounting.

mod capacity;
mod costs;
mod load;

pub use capacity::{compute_capacity, default_headroom, format_q, parse_ratio, CapacityModel, CapacityReport, Q};
pub use costs::{compute_costs, costs_from_monthly, Cents, CostModel, CostReport, Span};
pub use load::{percentile, LoadReport, Percentiles};
