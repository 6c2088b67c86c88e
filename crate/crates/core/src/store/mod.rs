//! Write-global / query-local forecast store.
//!
//! A stacked forecast is written as one row per grid point, each row holding
//! the point's full `timesteps × variables` block. A run becomes visible to
//! queries only once its manifest commits.

mod backend;
mod file;

use std::collections::{BTreeMap, HashSet};
use std::path::Path;
use std::sync::mpsc::sync_channel;
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use backend::{MemoryBackend, RowBackend, RowKey, RowRecord, SegmentLayout};
pub use file::{FileBackend, SEGMENT_HEADER_LEN, SEGMENT_MAGIC};

use crate::cycle::{is_cycle_aligned, iso8601};
use crate::grid::{bbox_indices, grid_spec, BoundingBox, ForecastTensor, GridSpec, LEAD_STEP_HOURS};

pub const DEFAULT_BATCH_SIZE: usize = 10_000;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("run {} already stored", iso8601(*.0))]
    Conflict(DateTime<Utc>),
    #[error("no such run {}", iso8601(*.0))]
    NoSuchRun(DateTime<Utc>),
    #[error("store holds no runs")]
    NoRuns,
    #[error("invalid forecast: {0}")]
    InvalidForecast(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt store: {0}")]
    Corrupt(String),
    #[error("backend: {0}")]
    Backend(String),
}

impl StoreError {
    pub fn kind(&self) -> &'static str {
        match self {
            StoreError::Conflict(_) => "conflict",
            StoreError::NoSuchRun(_) => "no_such_run",
            StoreError::NoRuns => "no_runs",
            StoreError::InvalidForecast(_) => "invalid_forecast",
            StoreError::InvalidArgument(_) => "invalid_argument",
            StoreError::Io(_) => "io",
            StoreError::Corrupt(_) => "corrupt",
            StoreError::Backend(_) => "backend",
        }
    }

    pub(crate) fn no_such_run(run: i64) -> Self {
        StoreError::NoSuchRun(run_time_of(run))
    }
}

fn run_time_of(run: i64) -> DateTime<Utc> {
    Utc.timestamp_opt(run, 0).single().unwrap_or(DateTime::<Utc>::MIN_UTC)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub forecast_run_time: DateTime<Utc>,
    pub grid: GridSpec,
    pub variables: Vec<String>,
    pub timestep_count: usize,
    pub lead_hours: Vec<u32>,
    pub row_count: usize,
    pub created_at: DateTime<Utc>,
}

impl RunManifest {
    pub fn run_key(&self) -> i64 {
        self.forecast_run_time.timestamp()
    }

    pub fn variable_index(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v == name)
    }

    fn layout(&self) -> SegmentLayout {
        SegmentLayout {
            run: self.run_key(),
            nlat: self.grid.nlat as u32,
            nlon: self.grid.nlon as u32,
            timesteps: self.timestep_count as u32,
            variables: self.variables.len() as u32,
        }
    }
}

/// One persisted grid point. `block[lead * variables + v]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridRow {
    pub forecast_run_time: DateTime<Utc>,
    pub latitude: f64,
    pub longitude: f64,
    pub lat_index: usize,
    pub lon_index: usize,
    pub block: Vec<f32>,
}

#[derive(Debug, Clone, Copy)]
pub struct StoreConfig {
    pub batch_size: usize,
}

impl Default for StoreConfig {
    fn default() -> Self {
        Self { batch_size: DEFAULT_BATCH_SIZE }
    }
}

struct Inner {
    backend: Box<dyn RowBackend>,
    index: RwLock<BTreeMap<i64, Arc<RunManifest>>>,
    writing: Mutex<HashSet<i64>>,
    config: StoreConfig,
}

/// Read-write store handle. Cloning shares the same store.
#[derive(Clone)]
pub struct ForecastStore {
    inner: Arc<Inner>,
}

/// Query-only view of a store; it has no write path.
#[derive(Clone)]
pub struct StoreReader {
    inner: Arc<Inner>,
}

struct WritingGuard<'a> {
    inner: &'a Inner,
    run: i64,
}

impl Drop for WritingGuard<'_> {
    fn drop(&mut self) {
        self.inner.writing.lock().unwrap().remove(&self.run);
    }
}

impl ForecastStore {
    /// Open (or create) a file-backed store rooted at `dir`.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, StoreError> {
        Self::with_backend(Box::new(FileBackend::open(dir.as_ref())?), StoreConfig::default())
    }

    pub fn in_memory() -> Self {
        Self::with_backend(Box::new(MemoryBackend::new()), StoreConfig::default()).expect("empty memory backend")
    }

    pub fn with_backend(backend: Box<dyn RowBackend>, config: StoreConfig) -> Result<Self, StoreError> {
        if config.batch_size == 0 {
            return Err(StoreError::InvalidArgument("batch size must be positive".into()));
        }
        let index = backend.load_manifests()?.into_iter().map(|m| (m.run_key(), Arc::new(m))).collect();
        Ok(Self {
            inner: Arc::new(Inner {
                backend,
                index: RwLock::new(index),
                writing: Mutex::new(HashSet::new()),
                config,
            }),
        })
    }

    pub fn reader(&self) -> StoreReader {
        StoreReader { inner: self.inner.clone() }
    }

    pub fn store_forecast(&self, run_time: DateTime<Utc>, stacked: &ForecastTensor) -> Result<RunManifest, StoreError> {
        self.store_forecast_with(run_time, stacked, false)
    }

    /// Persist `stacked` as run `run_time`. With `overwrite` an existing run
    /// is replaced; it stays queryable until the replacement commits.
    pub fn store_forecast_with(
        &self,
        run_time: DateTime<Utc>,
        stacked: &ForecastTensor,
        overwrite: bool,
    ) -> Result<RunManifest, StoreError> {
        let manifest = describe(run_time, stacked)?;
        let run = manifest.run_key();
        let inner = &*self.inner;
        {
            let mut writing = inner.writing.lock().unwrap();
            let exists = inner.index.read().unwrap().contains_key(&run);
            if writing.contains(&run) || (exists && !overwrite) {
                return Err(StoreError::Conflict(run_time));
            }
            writing.insert(run);
        }
        let _guard = WritingGuard { inner, run };

        let layout = manifest.layout();
        inner.backend.begin_run(layout)?;
        if let Err(e) = write_rows(inner, layout, stacked) {
            inner.backend.abort_run(run);
            return Err(e);
        }
        if let Err(e) = inner.backend.finish_run(&manifest) {
            inner.backend.abort_run(run);
            return Err(e);
        }
        inner.index.write().unwrap().insert(run, Arc::new(manifest.clone()));
        Ok(manifest)
    }

    /// Keep the `max_runs` newest runs. Each removed run leaves the query
    /// surface before its rows are reclaimed.
    pub fn apply_retention(&self, max_runs: usize) -> Result<Vec<DateTime<Utc>>, StoreError> {
        if max_runs == 0 {
            return Err(StoreError::InvalidArgument("retention must keep at least one run".into()));
        }
        let doomed: Vec<i64> = {
            let mut index = self.inner.index.write().unwrap();
            let excess = index.len().saturating_sub(max_runs);
            let keys: Vec<i64> = index.keys().take(excess).copied().collect();
            for k in &keys {
                index.remove(k);
            }
            keys
        };
        for &run in &doomed {
            self.inner.backend.remove_manifest(run)?;
            self.inner.backend.delete_rows(run)?;
        }
        Ok(doomed.into_iter().map(run_time_of).collect())
    }

    pub fn query_bbox(&self, run_time: DateTime<Utc>, bbox: &BoundingBox) -> Result<Vec<GridRow>, StoreError> {
        self.inner.query_bbox(run_time, bbox)
    }

    pub fn latest_run(&self) -> Result<RunManifest, StoreError> {
        self.inner.latest_run()
    }

    pub fn manifest(&self, run_time: DateTime<Utc>) -> Result<RunManifest, StoreError> {
        self.inner.manifest(run_time).map(|m| (*m).clone())
    }

    pub fn runs(&self) -> Vec<DateTime<Utc>> {
        self.inner.runs()
    }
}

impl StoreReader {
    pub fn query_bbox(&self, run_time: DateTime<Utc>, bbox: &BoundingBox) -> Result<Vec<GridRow>, StoreError> {
        self.inner.query_bbox(run_time, bbox)
    }

    pub fn latest_run(&self) -> Result<RunManifest, StoreError> {
        self.inner.latest_run()
    }

    pub fn manifest(&self, run_time: DateTime<Utc>) -> Result<RunManifest, StoreError> {
        self.inner.manifest(run_time).map(|m| (*m).clone())
    }

    pub fn runs(&self) -> Vec<DateTime<Utc>> {
        self.inner.runs()
    }
}

impl Inner {
    fn manifest(&self, run_time: DateTime<Utc>) -> Result<Arc<RunManifest>, StoreError> {
        self.index
            .read()
            .unwrap()
            .get(&run_time.timestamp())
            .cloned()
            .ok_or(StoreError::NoSuchRun(run_time))
    }

    fn latest_run(&self) -> Result<RunManifest, StoreError> {
        self.index.read().unwrap().values().next_back().map(|m| (**m).clone()).ok_or(StoreError::NoRuns)
    }

    fn runs(&self) -> Vec<DateTime<Utc>> {
        self.index.read().unwrap().keys().map(|&k| run_time_of(k)).collect()
    }

    fn query_bbox(&self, run_time: DateTime<Utc>, bbox: &BoundingBox) -> Result<Vec<GridRow>, StoreError> {
        let m = self.manifest(run_time)?;
        let sel = bbox_indices(&m.grid, bbox);
        let lat = sel.lat.start as u32..sel.lat.end as u32;
        let mut records = Vec::with_capacity(sel.count());
        for lon in &sel.lon {
            records.extend(self.backend.scan(m.run_key(), lat.clone(), lon.start as u32..lon.end as u32)?);
        }
        records.sort_unstable_by_key(|r| (r.lat_index, r.lon_index));
        Ok(records
            .into_iter()
            .map(|r| GridRow {
                forecast_run_time: m.forecast_run_time,
                latitude: m.grid.lat(r.lat_index as usize),
                longitude: m.grid.lon(r.lon_index as usize),
                lat_index: r.lat_index as usize,
                lon_index: r.lon_index as usize,
                block: r.block,
            })
            .collect())
    }
}

/// Check `stacked` is a storable run and build its manifest.
fn describe(run_time: DateTime<Utc>, stacked: &ForecastTensor) -> Result<RunManifest, StoreError> {
    let bad = |msg: String| Err(StoreError::InvalidForecast(msg));
    if !is_cycle_aligned(run_time) {
        return bad(format!("run time {} is not cycle-aligned", iso8601(run_time)));
    }
    let c = stacked.coords();
    let [b, t, leads, _, nlat, nlon] = c.shape();
    if b != 1 || t != 1 {
        return bad(format!("expected one batch and one time, found {b} and {t}"));
    }
    if c.time()[0] != run_time {
        return bad(format!("tensor initialised at {}, run time is {}", iso8601(c.time()[0]), iso8601(run_time)));
    }
    let lead_hours: Vec<u32> = (0..leads as u32).map(|k| k * LEAD_STEP_HOURS).collect();
    if leads == 0 || c.lead_time() != lead_hours.as_slice() {
        return bad(format!("lead times {:?} are not a full axis from 0 h", c.lead_time()));
    }
    let grid = if nlat >= 2 { grid_spec(180.0 / (nlat - 1) as f64).ok() } else { None };
    let grid = match grid {
        Some(g) if g.nlon == nlon && bits_eq(&g.latitudes(), c.lat()) && bits_eq(&g.longitudes(), c.lon()) => g,
        _ => return bad(format!("{nlat}×{nlon} coordinates are not a global grid")),
    };
    Ok(RunManifest {
        forecast_run_time: run_time,
        grid,
        variables: c.variables().iter().map(|v| v.as_str().to_owned()).collect(),
        timestep_count: leads,
        lead_hours,
        row_count: grid.point_count(),
        created_at: Utc::now(),
    })
}

fn bits_eq(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

/// Transpose the tensor into row blocks on a producer thread and hand each
/// batch to the backend by value.
fn write_rows(inner: &Inner, layout: SegmentLayout, stacked: &ForecastTensor) -> Result<(), StoreError> {
    let points = layout.row_count();
    let block_len = layout.block_len();
    let nlon = layout.nlon as usize;
    let batch_size = inner.config.batch_size;
    let values = stacked.values();
    let (tx, rx) = sync_channel::<Vec<RowRecord>>(1);
    std::thread::scope(|s| {
        s.spawn(move || {
            const TILE: usize = 64;
            let mut start = 0;
            while start < points {
                let end = (start + batch_size).min(points);
                let mut batch: Vec<RowRecord> = (start..end)
                    .map(|p| RowRecord {
                        lat_index: (p / nlon) as u32,
                        lon_index: (p % nlon) as u32,
                        block: vec![0.0; block_len],
                    })
                    .collect();
                for tile in (start..end).step_by(TILE) {
                    let tile_end = (tile + TILE).min(end);
                    for k in 0..block_len {
                        let plane = &values[k * points..(k + 1) * points];
                        for p in tile..tile_end {
                            batch[p - start].block[k] = plane[p];
                        }
                    }
                }
                if tx.send(batch).is_err() {
                    return;
                }
                start = end;
            }
        });
        for batch in rx {
            inner.backend.put_batch(layout.run, batch)?;
        }
        Ok(())
    })
}

/// Raw payload bytes for `runs_retained` runs, excluding keys and overhead.
pub fn estimate_storage(spec: &GridSpec, timesteps: u64, variables: u64, bytes_per_value: u64, runs_retained: u64) -> u64 {
    spec.point_count() as u64 * timesteps * variables * bytes_per_value * runs_retained
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{CoordinateSet, VariableId};
    use chrono::Duration;
    use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};

    fn t0() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2026, 2, 3, 0, 0, 0).unwrap()
    }

    /// Stacked tensor at resolution `res` with `vars` variables and `leads`
    /// lead times; value encodes its own index.
    fn synthetic(res: f64, vars: usize, leads: usize, run: DateTime<Utc>) -> ForecastTensor {
        let g = grid_spec(res).unwrap();
        let variable = (0..vars).map(|v| VariableId::new(format!("v{v}"))).collect();
        let coords = CoordinateSet::from_parts(
            vec![0],
            vec![run],
            (0..leads as u32).map(|k| k * 6).collect(),
            variable,
            g.latitudes(),
            g.longitudes(),
        )
        .unwrap();
        let n = leads * vars * g.point_count();
        let salt = run.timestamp() as f32 * 1e-6;
        ForecastTensor::new((0..n).map(|i| i as f32 + salt).collect(), coords).unwrap()
    }

    fn expected_block(t: &ForecastTensor, i: usize, j: usize) -> Vec<f32> {
        let [_, _, leads, vars, _, nlon] = t.shape();
        let p = t.plane_len();
        (0..leads * vars).map(|k| t.values()[k * p + i * nlon + j]).collect()
    }

    #[test]
    fn storage_estimates() {
        let q = grid_spec(0.25).unwrap();
        let one = grid_spec(1.0).unwrap();
        assert_eq!(estimate_storage(&q, 61, 75, 4, 1), 18_999_792_000);
        assert_eq!(estimate_storage(&one, 61, 75, 4, 1), 1_192_428_000);
        assert_eq!(estimate_storage(&one, 61, 75, 4, 0), 0);
        // Four runs a day at the published ~4 GB per run bounds steady state at ~16 GB.
        assert_eq!(4 * 4_000_000_000u64, 16_000_000_000);
    }

    #[test]
    fn manifest_describes_run() {
        let s = ForecastStore::in_memory();
        let t = synthetic(10.0, 2, 3, t0());
        let m = s.store_forecast(t0(), &t).unwrap();
        assert_eq!(m.row_count, 19 * 36);
        assert_eq!(m.lead_hours, vec![0, 6, 12]);
        assert_eq!(m.timestep_count, 3);
        assert_eq!(m.variables, vec!["v0", "v1"]);
    }

    #[test]
    fn duplicate_run_conflicts_and_leaves_store_unchanged() {
        let dir = tempfile::tempdir().unwrap();
        let s = ForecastStore::open(dir.path()).unwrap();
        let a = synthetic(10.0, 2, 2, t0());
        s.store_forecast(t0(), &a).unwrap();
        let before = s.query_bbox(t0(), &BoundingBox::global()).unwrap();
        let mut other = synthetic(10.0, 2, 2, t0()).into_parts();
        other.0.iter_mut().for_each(|v| *v = -1.0);
        let b = ForecastTensor::new(other.0, other.1).unwrap();
        assert!(matches!(s.store_forecast(t0(), &b), Err(StoreError::Conflict(_))));
        assert_eq!(s.query_bbox(t0(), &BoundingBox::global()).unwrap(), before);
        s.store_forecast_with(t0(), &b, true).unwrap();
        assert!(s.query_bbox(t0(), &BoundingBox::global()).unwrap().iter().all(|r| r.block.iter().all(|&v| v == -1.0)));
    }

    #[test]
    fn round_trip_is_bit_exact_on_both_backends() {
        let dir = tempfile::tempdir().unwrap();
        let run = t0() + Duration::hours(6);
        let t = synthetic(5.0, 3, 4, run);
        for s in [ForecastStore::in_memory(), ForecastStore::open(dir.path()).unwrap()] {
            s.store_forecast(run, &t).unwrap();
            let rows = s.query_bbox(run, &BoundingBox::global()).unwrap();
            assert_eq!(rows.len(), 37 * 72);
            for (k, r) in rows.iter().enumerate() {
                assert_eq!((r.lat_index, r.lon_index), (k / 72, k % 72));
                assert_eq!(r.latitude, 90.0 - 5.0 * r.lat_index as f64);
                let want = expected_block(&t, r.lat_index, r.lon_index);
                assert!(r.block.iter().zip(&want).all(|(a, b)| a.to_bits() == b.to_bits()));
            }
        }
        let reopened = ForecastStore::open(dir.path()).unwrap();
        assert_eq!(reopened.latest_run().unwrap().forecast_run_time, run);
        let one = reopened.query_bbox(run, &BoundingBox::around(0.0, 10.0, 0.1).unwrap()).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].block, expected_block(&t, 18, 2));
    }

    #[test]
    fn rejects_malformed_forecasts() {
        let s = ForecastStore::in_memory();
        let t = synthetic(10.0, 1, 2, t0());
        assert!(matches!(s.store_forecast(t0() + Duration::hours(6), &t), Err(StoreError::InvalidForecast(_))));
        let off = t0() + Duration::hours(1);
        assert!(matches!(s.store_forecast(off, &synthetic(10.0, 1, 2, off)), Err(StoreError::InvalidForecast(_))));
    }

    #[test]
    fn unknown_and_empty() {
        let s = ForecastStore::in_memory();
        assert!(matches!(s.latest_run(), Err(StoreError::NoRuns)));
        assert!(matches!(s.query_bbox(t0(), &BoundingBox::global()), Err(StoreError::NoSuchRun(_))));
    }

    #[test]
    fn retention_is_newest_first_and_latest_survives() {
        let dir = tempfile::tempdir().unwrap();
        let s = ForecastStore::open(dir.path()).unwrap();
        let runs: Vec<_> = (0..5).map(|k| t0() + Duration::hours(6 * k)).collect();
        for &r in &runs[..2] {
            s.store_forecast(r, &synthetic(30.0, 1, 1, r)).unwrap();
        }
        assert!(s.apply_retention(4).unwrap().is_empty());
        for &r in &runs[2..] {
            s.store_forecast(r, &synthetic(30.0, 1, 1, r)).unwrap();
        }
        assert_eq!(s.apply_retention(4).unwrap(), vec![runs[0]]);
        assert_eq!(s.runs(), runs[1..].to_vec());
        assert_eq!(s.latest_run().unwrap().forecast_run_time, runs[4]);
        assert!(matches!(s.query_bbox(runs[0], &BoundingBox::global()), Err(StoreError::NoSuchRun(_))));
        assert!(!dir.path().join("runs").join("20260203T000000Z.seg").exists());
        assert_eq!(ForecastStore::open(dir.path()).unwrap().runs(), runs[1..].to_vec());
        assert!(matches!(s.apply_retention(0), Err(StoreError::InvalidArgument(_))));
    }

    struct FailingBackend {
        inner: MemoryBackend,
        batches_before_failure: AtomicUsize,
    }

    impl RowBackend for FailingBackend {
        fn begin_run(&self, layout: SegmentLayout) -> Result<(), StoreError> {
            self.inner.begin_run(layout)
        }
        fn put_batch(&self, run: i64, batch: Vec<RowRecord>) -> Result<(), StoreError> {
            if self.batches_before_failure.fetch_sub(1, Ordering::SeqCst) == 0 {
                return Err(StoreError::Backend("disk full".into()));
            }
            self.inner.put_batch(run, batch)
        }
        fn finish_run(&self, m: &RunManifest) -> Result<(), StoreError> {
            self.inner.finish_run(m)
        }
        fn abort_run(&self, run: i64) {
            self.inner.abort_run(run)
        }
        fn scan(&self, run: i64, lat: std::ops::Range<u32>, lon: std::ops::Range<u32>) -> Result<Vec<RowRecord>, StoreError> {
            self.inner.scan(run, lat, lon)
        }
        fn remove_manifest(&self, run: i64) -> Result<(), StoreError> {
            self.inner.remove_manifest(run)
        }
        fn delete_rows(&self, run: i64) -> Result<(), StoreError> {
            self.inner.delete_rows(run)
        }
        fn load_manifests(&self) -> Result<Vec<RunManifest>, StoreError> {
            self.inner.load_manifests()
        }
    }

    #[test]
    fn partial_write_never_becomes_visible() {
        let backend = FailingBackend { inner: MemoryBackend::new(), batches_before_failure: AtomicUsize::new(2) };
        let s = ForecastStore::with_backend(Box::new(backend), StoreConfig { batch_size: 100 }).unwrap();
        let err = s.store_forecast(t0(), &synthetic(10.0, 1, 2, t0())).unwrap_err();
        assert_eq!(err.kind(), "backend");
        assert!(matches!(s.latest_run(), Err(StoreError::NoRuns)));
        assert!(matches!(s.query_bbox(t0(), &BoundingBox::global()), Err(StoreError::NoSuchRun(_))));
        // The backend fails once; the retry is not blocked by the aborted attempt.
        s.store_forecast(t0(), &synthetic(10.0, 1, 2, t0())).unwrap();
        assert_eq!(s.latest_run().unwrap().row_count, 19 * 36);
    }

    #[test]
    fn partial_write_on_disk_leaves_no_run() {
        let dir = tempfile::tempdir().unwrap();
        {
            let fb = FileBackend::open(dir.path()).unwrap();
            let layout = SegmentLayout { run: t0().timestamp(), nlat: 7, nlon: 12, timesteps: 1, variables: 1 };
            fb.begin_run(layout).unwrap();
            fb.put_batch(layout.run, vec![RowRecord { lat_index: 0, lon_index: 0, block: vec![1.0] }]).unwrap();
            // Writer vanishes without finishing.
            std::mem::forget(fb);
        }
        let s = ForecastStore::open(dir.path()).unwrap();
        assert!(s.runs().is_empty());
        assert_eq!(std::fs::read_dir(dir.path().join("runs")).unwrap().count(), 0);
    }

    #[test]
    fn readers_never_see_a_partial_run() {
        let dir = tempfile::tempdir().unwrap();
        let backend = FileBackend::open(dir.path()).unwrap();
        let s = ForecastStore::with_backend(Box::new(backend), StoreConfig { batch_size: 7 }).unwrap();
        let first = synthetic(5.0, 2, 3, t0());
        s.store_forecast(t0(), &first).unwrap();
        let second_run = t0() + Duration::hours(6);
        let second = synthetic(5.0, 2, 3, second_run);
        let done = AtomicBool::new(false);
        let reader = s.reader();
        std::thread::scope(|sc| {
            sc.spawn(|| {
                let mut seen_second = false;
                while !done.load(Ordering::SeqCst) || !seen_second {
                    let m = reader.latest_run().unwrap();
                    let rows = reader.query_bbox(m.forecast_run_time, &BoundingBox::global()).unwrap();
                    assert_eq!(rows.len(), m.row_count);
                    let t = if m.forecast_run_time == t0() { &first } else { &second };
                    let last = rows.last().unwrap();
                    assert_eq!(last.block, expected_block(t, last.lat_index, last.lon_index));
                    seen_second |= m.forecast_run_time == second_run;
                }
            });
            s.store_forecast(second_run, &second).unwrap();
            done.store(true, Ordering::SeqCst);
        });
    }
}
