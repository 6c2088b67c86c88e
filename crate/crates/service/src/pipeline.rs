//! Ingest → inference → store, composed from the core modules.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use earlywarn_core::grid::{build_catalog, grid_spec, ForecastTensor, VariableId};
use earlywarn_core::inference::{make_initial_state, run_forecast, stack_forecast, stacked_value_count, ToyModel, ToyModelConfig};
use earlywarn_core::ingest::{assemble_initial_tensor, FetchResult, FixtureStore, Ingestor, WorkerLauncher};
use earlywarn_core::store::{ForecastStore, RunManifest};
use serde::Serialize;

use crate::Error;

/// Where the initial state comes from.
#[derive(Debug, Clone)]
pub enum InitialSource {
    /// Generated in process from the seed.
    Synthetic,
    /// Fetched from a fixture store through an isolated worker.
    Fixture { root: PathBuf, launcher: WorkerLauncher, timeout: Duration },
}

#[derive(Debug, Clone)]
pub struct ForecastOptions {
    pub resolution_deg: f64,
    pub steps: usize,
    pub cycle: DateTime<Utc>,
    pub model: ToyModelConfig,
    pub source: InitialSource,
    pub overwrite: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ForecastOutcome {
    pub manifest: RunManifest,
    pub states: usize,
    pub value_count: u64,
    pub inference_s: f64,
    pub insert_s: f64,
}

/// Value count of the stacked tensor, without running anything.
pub fn dry_run_value_count(resolution_deg: f64, steps: usize) -> Result<u64, Error> {
    let grid = grid_spec(resolution_deg)?;
    Ok(stacked_value_count(&grid, build_catalog().len(), steps))
}

/// Initial state for `opts`.
pub fn initial_state(opts: &ForecastOptions) -> Result<ForecastTensor, Error> {
    let grid = grid_spec(opts.resolution_deg)?;
    let catalog = build_catalog();
    match &opts.source {
        InitialSource::Synthetic => Ok(make_initial_state(&grid, &catalog, opts.cycle, opts.model.seed)?),
        InitialSource::Fixture { root, launcher, timeout } => {
            let store = FixtureStore::open(root)?;
            let vars: Vec<VariableId> = catalog.ids().cloned().collect();
            let req = store.request(opts.cycle, vars).with_timeout(*timeout);
            let res = Ingestor::new(launcher.clone(), catalog.clone()).fetch_initial_conditions(&req, &store)?;
            Ok(assemble_initial_tensor(&res, &catalog, &grid)?)
        }
    }
}

/// Run the toy model and return the stacked forecast.
pub fn forecast(opts: &ForecastOptions) -> Result<ForecastTensor, Error> {
    let grid = grid_spec(opts.resolution_deg)?;
    let model = ToyModel::new(opts.model, grid, build_catalog())?;
    let initial = initial_state(opts)?;
    Ok(stack_forecast(run_forecast(&model, initial, opts.steps)?)?)
}

/// Forecast and persist one run.
pub fn forecast_and_store(store: &ForecastStore, opts: &ForecastOptions) -> Result<ForecastOutcome, Error> {
    let started = Instant::now();
    let stacked = forecast(opts)?;
    let inference = started.elapsed();
    let started = Instant::now();
    let manifest = store.store_forecast_with(opts.cycle, &stacked, opts.overwrite)?;
    let insert = started.elapsed();
    Ok(ForecastOutcome {
        states: stacked.shape()[2],
        value_count: stacked.values().len() as u64,
        manifest,
        inference_s: inference.as_secs_f64(),
        insert_s: insert.as_secs_f64(),
    })
}

/// Write a synthetic initial state into a fixture store as per-variable objects.
pub fn seed_fixture(root: impl Into<PathBuf>, resolution_deg: f64, cycle: DateTime<Utc>, seed: u64) -> Result<FixtureStore, Error> {
    let grid = grid_spec(resolution_deg)?;
    let state = make_initial_state(&grid, &build_catalog(), cycle, seed)?;
    let store = FixtureStore::open(root.into())?;
    store.put_state(&state, grid)?;
    Ok(store)
}

/// Fetch `variables` (all when empty) for `cycle` through an isolated worker.
pub fn ingest(
    root: impl Into<PathBuf>,
    cycle: DateTime<Utc>,
    variables: &[String],
    launcher: WorkerLauncher,
    timeout: Duration,
) -> Result<FetchResult, Error> {
    let catalog = build_catalog();
    let store = FixtureStore::open(root.into())?;
    let vars: Vec<VariableId> = if variables.is_empty() {
        catalog.ids().cloned().collect()
    } else {
        variables.iter().map(VariableId::new).collect()
    };
    let req = store.request(cycle, vars).with_timeout(timeout);
    Ok(Ingestor::new(launcher, catalog).fetch_initial_conditions(&req, &store)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use earlywarn_core::cycle::parse_time;

    fn opts(res: f64) -> ForecastOptions {
        ForecastOptions {
            resolution_deg: res,
            steps: 4,
            cycle: parse_time("2026-02-03T06:00:00Z").unwrap(),
            model: ToyModelConfig { seed: 3, ..ToyModelConfig::default() },
            source: InitialSource::Synthetic,
            overwrite: false,
        }
    }

    #[test]
    fn dry_run_counts_at_quarter_degree() {
        assert_eq!(dry_run_value_count(0.25, 60).unwrap(), 4_749_948_000);
        assert_eq!(dry_run_value_count(0.3, 60).unwrap_err().kind, "invalid_resolution");
    }

    #[test]
    fn fixture_and_synthetic_sources_agree() {
        let dir = tempfile::tempdir().unwrap();
        let o = opts(10.0);
        seed_fixture(dir.path(), 10.0, o.cycle, 3).unwrap();
        let via = ForecastOptions {
            source: InitialSource::Fixture { root: dir.path().into(), launcher: WorkerLauncher::Thread, timeout: Duration::from_secs(30) },
            ..o.clone()
        };
        let (a, b) = (forecast(&o).unwrap(), forecast(&via).unwrap());
        assert_eq!(a.coords(), b.coords());
        assert!(a.values().iter().zip(b.values()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn stores_a_run() {
        let store = ForecastStore::in_memory();
        let out = forecast_and_store(&store, &opts(10.0)).unwrap();
        assert_eq!(out.states, 5);
        assert_eq!(out.manifest.row_count, 19 * 36);
        assert_eq!(forecast_and_store(&store, &opts(10.0)).unwrap_err().kind, "conflict");
    }
}
