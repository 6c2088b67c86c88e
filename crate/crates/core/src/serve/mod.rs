//! User-facing logic: geocoding, point forecasts, flood risk, advisories and
//! alert dispatch. Everything here reads the store through [`StoreReader`]
//! only.
//!
//! [`StoreReader`]: crate::store::StoreReader

mod dispatch;
mod gazetteer;
mod render;
mod risk;
mod series;

use thiserror::Error;

pub use dispatch::{
    dedup_key, dispatch_alerts, meets, AlertCandidate, AlertMessage, DispatchReport, FileOutbox, Outbox, OutboxRecord,
    Subscriber,
};
pub use gazetteer::{geocode, Gazetteer};
pub use render::{default_offset, render_summary, window_phrase, RenderContext, Template, TemplateSet, WARNING_WORDS};
pub use risk::{assess_flood_risk, peak_accumulation, rolling_sums, RiskAssessment, RiskConfig, RiskLevel, Signal, TCWV, TP};
pub use series::{
    get_point_forecast, get_point_forecast_timed, ForecastSeries, Location, SnappedLocation, StageTimings, VariableSeries,
};

use crate::store::StoreError;

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("unknown place `{0}`")]
    GeocodeMiss(String),
    #[error("invalid location: {0}")]
    InvalidLocation(String),
    #[error("variable `{0}` is not in the forecast run")]
    UnknownVariable(String),
    #[error("series lacks required variable `{0}`")]
    MissingSignal(String),
    #[error("no template for level {level} in locale `{locale}`")]
    TemplateMiss { level: String, locale: String },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("internal: {0}")]
    Internal(String),
}

impl ServeError {
    pub fn kind(&self) -> &'static str {
        match self {
            ServeError::GeocodeMiss(_) => "geocode_miss",
            ServeError::InvalidLocation(_) => "invalid_location",
            ServeError::UnknownVariable(_) => "unknown_variable",
            ServeError::MissingSignal(_) => "missing_signal",
            ServeError::TemplateMiss { .. } => "template_miss",
            ServeError::Store(e) => e.kind(),
            ServeError::Internal(_) => "internal",
        }
    }
}
