//! Autoregressive forecast stepping with model-owned coordinate bookkeeping.
//!
//! A [`ForecastStepper`] is the only producer of advanced lead times: callers
//! hand it an initial state at lead 0 and receive `(tensor, coords)` pairs at
//! 6 h, 12 h, ... without ever building a lead-time list themselves.
//!
//! Stacked forecasts keep the declared dimension order
//! `[batch, time, lead_time, variable, lat, lon]`. With `batch = time = 1`
//! the row-major layout equals the stored `(lead_time, 1, 1, 1, variable,
//! lat, lon)` array, so the two conventions share one buffer.

mod initial;
mod toy;

use chrono::{DateTime, Utc};

pub use initial::make_initial_state;
pub use toy::{ToyModel, ToyModelConfig};

use crate::grid::{validate_coords, CoordinateSet, ForecastTensor, GridError, GridSpec, VariableCatalog, LEAD_STEP_HOURS};

#[derive(Debug, thiserror::Error)]
pub enum InferenceError {
    #[error("cycle time {0} is not aligned to a 6-hour cycle")]
    CycleAlignment(DateTime<Utc>),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("non-finite value at step {step} in variable {variable}")]
    NumericInstability { step: usize, variable: String },
    #[error("lead-time sequence error: {0}")]
    Sequence(String),
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error("forecast_steps must be at least 1")]
    NoSteps,
}

impl InferenceError {
    pub fn kind(&self) -> &'static str {
        match self {
            InferenceError::CycleAlignment(_) => "cycle_alignment",
            InferenceError::Grid(e) => e.kind(),
            InferenceError::NumericInstability { .. } => "numeric_instability",
            InferenceError::Sequence(_) => "sequence",
            InferenceError::InvalidConfig(_) => "invalid_config",
            InferenceError::NoSteps => "invalid_steps",
        }
    }
}

/// A single-step dynamics model over the full catalog on one grid.
pub trait ForecastModel {
    fn grid(&self) -> &GridSpec;

    fn catalog(&self) -> &VariableCatalog;

    /// Write the state one step after `current` into `next`. Both slices hold
    /// whole lat/lon planes; `step` is the 1-based index of the step produced.
    fn advance(&self, current: &[f32], next: &mut [f32], step: usize);

    /// Frame an initial state must match: batch `[0]`, the given times,
    /// lead `[0]`, the catalog variables and this grid's coordinates.
    fn expected_frame(&self, time: &[DateTime<Utc>]) -> CoordinateSet {
        let g = self.grid();
        CoordinateSet::from_parts(
            vec![0],
            time.to_vec(),
            vec![0],
            self.catalog().ids().cloned().collect(),
            g.latitudes(),
            g.longitudes(),
        )
        .expect("lead time 0 is valid")
    }
}

/// One yielded step: the advanced tensor (carrying its coordinates).
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub tensor: ForecastTensor,
}

impl StepOutput {
    pub fn coords(&self) -> &CoordinateSet {
        self.tensor.coords()
    }
}

/// Sequential single-consumer stepper. Unbounded; stops after the first error.
pub struct ForecastStepper<'m, M: ForecastModel + ?Sized> {
    model: &'m M,
    values: Vec<f32>,
    scratch: Vec<f32>,
    coords: CoordinateSet,
    step: usize,
    failed: bool,
}

/// Validate `initial` against the model frame and start stepping from it.
pub fn create_iterator<M: ForecastModel + ?Sized>(
    model: &M,
    initial: ForecastTensor,
) -> Result<ForecastStepper<'_, M>, InferenceError> {
    let expected = model.expected_frame(initial.coords().time());
    validate_coords(initial.coords(), &expected)?;
    let (values, coords) = initial.into_parts();
    let scratch = vec![0.0; values.len()];
    Ok(ForecastStepper { model, values, scratch, coords, step: 0, failed: false })
}

impl<M: ForecastModel + ?Sized> Iterator for ForecastStepper<'_, M> {
    type Item = Result<StepOutput, InferenceError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        self.step += 1;
        self.model.advance(&self.values, &mut self.scratch, self.step);
        std::mem::swap(&mut self.values, &mut self.scratch);
        if let Some(pos) = self.values.iter().position(|v| !v.is_finite()) {
            self.failed = true;
            let plane = self.model.grid().point_count();
            let variable = self.coords.variables()[(pos / plane) % self.coords.variables().len()].to_string();
            return Some(Err(InferenceError::NumericInstability { step: self.step, variable }));
        }
        self.coords = self.coords.advanced();
        let tensor = ForecastTensor::from_checked(self.values.clone(), self.coords.clone());
        Some(Ok(StepOutput { tensor }))
    }
}

/// Initial state followed by `forecast_steps` model steps.
pub fn run_forecast<M: ForecastModel + ?Sized>(
    model: &M,
    initial: ForecastTensor,
    forecast_steps: usize,
) -> Result<Vec<ForecastTensor>, InferenceError> {
    if forecast_steps == 0 {
        return Err(InferenceError::NoSteps);
    }
    let mut states = Vec::with_capacity(forecast_steps + 1);
    states.push(initial.clone());
    for (step, out) in create_iterator(model, initial)?.enumerate() {
        states.push(out?.tensor);
        if step + 1 >= forecast_steps {
            break;
        }
    }
    Ok(states)
}

/// Concatenate single-lead states along the lead-time axis.
///
/// States must share every coordinate except lead time, and lead times must
/// increase by exactly one model step.
pub fn stack_forecast(states: Vec<ForecastTensor>) -> Result<ForecastTensor, InferenceError> {
    let first = states.first().ok_or_else(|| InferenceError::Sequence("no states to stack".into()))?;
    let reference = first.coords().lead_time_masked();
    let mut leads = Vec::with_capacity(states.len());
    for (k, s) in states.iter().enumerate() {
        let lt = s.coords().lead_time();
        if lt.len() != 1 {
            return Err(InferenceError::Sequence(format!("state {k} has {} lead times, expected 1", lt.len())));
        }
        if let Some(&prev) = leads.last() {
            if lt[0] != prev + LEAD_STEP_HOURS {
                return Err(InferenceError::Sequence(format!(
                    "lead time {} h follows {prev} h at state {k}",
                    lt[0]
                )));
            }
        }
        validate_coords(&s.coords().lead_time_masked(), &reference)?;
        leads.push(lt[0]);
    }
    let coords = first.coords().with_lead_times(leads);
    let [b, t, _, v, nlat, nlon] = first.shape();
    let chunk = v * nlat * nlon;
    let mut values = Vec::with_capacity(chunk * b * t * states.len());
    if b * t == 1 {
        for s in states {
            values.extend_from_slice(s.values());
        }
    } else {
        for bt in 0..b * t {
            for s in &states {
                values.extend_from_slice(&s.values()[bt * chunk..(bt + 1) * chunk]);
            }
        }
    }
    Ok(ForecastTensor::from_checked(values, coords))
}

/// Values held by a stacked forecast, computed without allocating it.
pub fn stacked_value_count(grid: &GridSpec, variables: usize, forecast_steps: usize) -> u64 {
    (forecast_steps as u64 + 1) * variables as u64 * grid.point_count() as u64
}
