use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{GridError, GridSpec, VariableCatalog, VariableId};

/// Lead-time step of the forecast model, hours.
pub const LEAD_STEP_HOURS: u32 = 6;

/// The six tensor dimensions, in storage order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dim {
    Batch,
    Time,
    LeadTime,
    Variable,
    Lat,
    Lon,
}

impl Dim {
    pub const ALL: [Dim; 6] = [Dim::Batch, Dim::Time, Dim::LeadTime, Dim::Variable, Dim::Lat, Dim::Lon];

    pub fn name(self) -> &'static str {
        match self {
            Dim::Batch => "batch",
            Dim::Time => "time",
            Dim::LeadTime => "lead_time",
            Dim::Variable => "variable",
            Dim::Lat => "lat",
            Dim::Lon => "lon",
        }
    }
}

impl fmt::Display for Dim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Coordinate frame `[batch, time, lead_time, variable, lat, lon]`.
///
/// Fields are private so that lead times can only be produced by
/// construction from a grid or by the forecast stepper.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordinateSet {
    batch: Vec<u32>,
    time: Vec<DateTime<Utc>>,
    lead_time: Vec<u32>,
    variable: Vec<VariableId>,
    lat: Vec<f64>,
    lon: Vec<f64>,
}

impl CoordinateSet {
    /// Frame for initial conditions at lead time 0 over the full catalog.
    pub fn initial(spec: &GridSpec, catalog: &VariableCatalog, time: DateTime<Utc>) -> Self {
        Self {
            batch: vec![0],
            time: vec![time],
            lead_time: vec![0],
            variable: catalog.ids().cloned().collect(),
            lat: spec.latitudes(),
            lon: spec.longitudes(),
        }
    }

    pub fn from_parts(
        batch: Vec<u32>,
        time: Vec<DateTime<Utc>>,
        lead_time: Vec<u32>,
        variable: Vec<VariableId>,
        lat: Vec<f64>,
        lon: Vec<f64>,
    ) -> Result<Self, GridError> {
        if let Some(&bad) = lead_time.iter().find(|&&h| h % LEAD_STEP_HOURS != 0) {
            return Err(GridError::InvalidLeadTime(bad));
        }
        Ok(Self { batch, time, lead_time, variable, lat, lon })
    }

    pub fn dims(&self) -> [Dim; 6] {
        Dim::ALL
    }

    pub fn shape(&self) -> [usize; 6] {
        [
            self.batch.len(),
            self.time.len(),
            self.lead_time.len(),
            self.variable.len(),
            self.lat.len(),
            self.lon.len(),
        ]
    }

    pub fn batch(&self) -> &[u32] {
        &self.batch
    }

    pub fn time(&self) -> &[DateTime<Utc>] {
        &self.time
    }

    pub fn lead_time(&self) -> &[u32] {
        &self.lead_time
    }

    pub fn variables(&self) -> &[VariableId] {
        &self.variable
    }

    pub fn lat(&self) -> &[f64] {
        &self.lat
    }

    pub fn lon(&self) -> &[f64] {
        &self.lon
    }

    /// Same frame with the lead time advanced by one model step.
    pub(crate) fn advanced(&self) -> Self {
        let mut next = self.clone();
        for h in &mut next.lead_time {
            *h += LEAD_STEP_HOURS;
        }
        next
    }

    pub(crate) fn with_lead_times(&self, lead_time: Vec<u32>) -> Self {
        Self { lead_time, ..self.clone() }
    }

    /// Copy with an empty lead-time axis, for comparisons that must ignore
    /// lead time.
    pub fn lead_time_masked(&self) -> Self {
        self.with_lead_times(Vec::new())
    }

    fn dim_matches(&self, other: &Self, dim: Dim) -> bool {
        match dim {
            Dim::Batch => self.batch == other.batch,
            Dim::Time => self.time == other.time,
            Dim::LeadTime => self.lead_time == other.lead_time,
            Dim::Variable => self.variable == other.variable,
            Dim::Lat => bitwise_eq(&self.lat, &other.lat),
            Dim::Lon => bitwise_eq(&self.lon, &other.lon),
        }
    }
}

fn bitwise_eq(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

/// Ok iff every dimension's name, position and values agree; otherwise names
/// the first dimension (in storage order) that differs.
pub fn validate_coords(actual: &CoordinateSet, expected: &CoordinateSet) -> Result<(), GridError> {
    for (pos, (a, e)) in actual.dims().iter().zip(expected.dims().iter()).enumerate() {
        if a != e {
            return Err(GridError::CoordinateMismatch {
                dim: *e,
                detail: format!("position {pos} holds `{a}`"),
            });
        }
        if !actual.dim_matches(expected, *e) {
            return Err(GridError::CoordinateMismatch {
                dim: *e,
                detail: describe(actual, expected, *e),
            });
        }
    }
    Ok(())
}

fn describe(actual: &CoordinateSet, expected: &CoordinateSet, dim: Dim) -> String {
    match dim {
        Dim::LeadTime => format!("got {:?}, expected {:?}", actual.lead_time, expected.lead_time),
        Dim::Time => format!("got {:?}, expected {:?}", actual.time, expected.time),
        Dim::Batch => format!("got {:?}, expected {:?}", actual.batch, expected.batch),
        Dim::Variable => {
            let first = actual
                .variable
                .iter()
                .zip(&expected.variable)
                .position(|(a, e)| a != e)
                .unwrap_or(actual.variable.len().min(expected.variable.len()));
            format!(
                "{} vs {} entries, first difference at index {first}",
                actual.variable.len(),
                expected.variable.len()
            )
        }
        Dim::Lat | Dim::Lon => {
            let (a, e) = if dim == Dim::Lat {
                (&actual.lat, &expected.lat)
            } else {
                (&actual.lon, &expected.lon)
            };
            format!("{} vs {} values", a.len(), e.len())
        }
    }
}
