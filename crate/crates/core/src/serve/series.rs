use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{geocode, Gazetteer, ServeError};
use crate::grid::{latlon_to_index, BoundingBox};
use crate::store::StoreReader;

/// Where a point forecast is wanted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Location {
    Place { place: String },
    Coords { lat: f64, lon: f64 },
}

impl Location {
    pub fn place(name: impl Into<String>) -> Self {
        Location::Place { place: name.into() }
    }

    pub fn coords(lat: f64, lon: f64) -> Self {
        Location::Coords { lat, lon }
    }
}

/// The grid node a location snapped to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnappedLocation {
    pub lat: f64,
    pub lon: f64,
    pub lat_index: usize,
    pub lon_index: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub place: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableSeries {
    pub variable: String,
    pub values: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastSeries {
    pub location: SnappedLocation,
    pub run_time: DateTime<Utc>,
    pub lead_hours: Vec<u32>,
    pub series: Vec<VariableSeries>,
}

impl ForecastSeries {
    pub fn values(&self, variable: &str) -> Option<&[f32]> {
        self.series.iter().find(|s| s.variable == variable).map(|s| s.values.as_slice())
    }
}

/// Per-stage wall time of one point forecast.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimings {
    pub geocode: Duration,
    pub query: Duration,
    pub format: Duration,
}

pub fn get_point_forecast(
    reader: &StoreReader,
    gz: &Gazetteer,
    loc: &Location,
    variables: &[String],
    run: Option<DateTime<Utc>>,
) -> Result<ForecastSeries, ServeError> {
    get_point_forecast_timed(reader, gz, loc, variables, run).map(|(s, _)| s)
}

pub fn get_point_forecast_timed(
    reader: &StoreReader,
    gz: &Gazetteer,
    loc: &Location,
    variables: &[String],
    run: Option<DateTime<Utc>>,
) -> Result<(ForecastSeries, StageTimings), ServeError> {
    let mut timings = StageTimings::default();
    let started = Instant::now();
    let (lat, lon, place) = match loc {
        Location::Place { place } => {
            let (lat, lon) = geocode(place, gz)?;
            (lat, lon, Some(gz.canonical(place).unwrap_or(place).to_owned()))
        }
        Location::Coords { lat, lon } => (*lat, *lon, None),
    };
    timings.geocode = started.elapsed();

    let started = Instant::now();
    let manifest = match run {
        Some(t) => reader.manifest(t)?,
        None => reader.latest_run()?,
    };
    let columns = variables
        .iter()
        .map(|v| manifest.variable_index(v).ok_or_else(|| ServeError::UnknownVariable(v.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    let (i, j) = latlon_to_index(&manifest.grid, lat, lon).map_err(|e| ServeError::InvalidLocation(e.to_string()))?;
    let (node_lat, node_lon) = (manifest.grid.lat(i), manifest.grid.lon(j));
    let node = BoundingBox::new(node_lat, node_lat, node_lon, node_lon).expect("grid node box");
    let rows = reader.query_bbox(manifest.forecast_run_time, &node)?;
    timings.query = started.elapsed();

    let started = Instant::now();
    let row = match rows.as_slice() {
        [r] if (r.lat_index, r.lon_index) == (i, j) => r,
        _ => return Err(ServeError::Internal(format!("node query returned {} rows", rows.len()))),
    };
    let nvars = manifest.variables.len();
    let series = variables
        .iter()
        .zip(&columns)
        .map(|(name, &v)| VariableSeries {
            variable: name.clone(),
            values: (0..manifest.timestep_count).map(|l| row.block[l * nvars + v]).collect(),
        })
        .collect();
    let out = ForecastSeries {
        location: SnappedLocation { lat: node_lat, lon: node_lon, lat_index: i, lon_index: j, place },
        run_time: manifest.forecast_run_time,
        lead_hours: manifest.lead_hours.clone(),
        series,
    };
    timings.format = started.elapsed();
    Ok((out, timings))
}
