//! Core of a two-tier AI-weather early-warning system: grid coordinates,
//! autoregressive toy forecasting, isolated ingestion, the write-global /
//! query-local forecast store, risk assessment and alerting, and the
//! deployment cost and capacity calculators.

pub mod cycle;
pub mod grid;
pub mod inference;
pub mod ingest;
pub mod ops;
pub mod serve;
pub mod store;
