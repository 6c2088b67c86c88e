//! The narrow row-store interface and an in-memory implementation.

use std::collections::{BTreeMap, HashMap};
use std::ops::Range;
use std::sync::{Arc, Mutex, RwLock};

use super::{RunManifest, StoreError};

/// Composite row key `(run_time, lat_index, lon_index)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RowKey {
    pub run: i64,
    pub lat_index: u32,
    pub lon_index: u32,
}

impl RowKey {
    /// 16 order-preserving bytes: sign-flipped big-endian run seconds, then
    /// big-endian latitude and longitude indices.
    pub fn encode(&self) -> [u8; 16] {
        let mut out = [0u8; 16];
        out[..8].copy_from_slice(&((self.run as u64) ^ (1 << 63)).to_be_bytes());
        out[8..12].copy_from_slice(&self.lat_index.to_be_bytes());
        out[12..].copy_from_slice(&self.lon_index.to_be_bytes());
        out
    }

    pub fn decode(bytes: &[u8; 16]) -> Self {
        Self {
            run: (u64::from_be_bytes(bytes[..8].try_into().unwrap()) ^ (1 << 63)) as i64,
            lat_index: u32::from_be_bytes(bytes[8..12].try_into().unwrap()),
            lon_index: u32::from_be_bytes(bytes[12..].try_into().unwrap()),
        }
    }
}

/// One stored row: grid indices plus the lead-time-major value block.
#[derive(Debug, Clone, PartialEq)]
pub struct RowRecord {
    pub lat_index: u32,
    pub lon_index: u32,
    pub block: Vec<f32>,
}

/// Dimensions of a run's rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SegmentLayout {
    pub run: i64,
    pub nlat: u32,
    pub nlon: u32,
    pub timesteps: u32,
    pub variables: u32,
}

impl SegmentLayout {
    pub fn block_len(&self) -> usize {
        self.timesteps as usize * self.variables as usize
    }

    pub fn row_count(&self) -> usize {
        self.nlat as usize * self.nlon as usize
    }
}

/// Storage behind [`super::ForecastStore`].
///
/// Rows written with `put_batch` are only exposed to queries once the run's
/// manifest is committed by `finish_run`; the store never scans an
/// uncommitted run.
pub trait RowBackend: Send + Sync {
    fn begin_run(&self, layout: SegmentLayout) -> Result<(), StoreError>;

    /// Rows arrive in key order, batch by batch.
    fn put_batch(&self, run: i64, batch: Vec<RowRecord>) -> Result<(), StoreError>;

    /// Seal the rows and commit the manifest. After this returns the run is
    /// durable.
    fn finish_run(&self, manifest: &RunManifest) -> Result<(), StoreError>;

    /// Drop an unfinished run's rows.
    fn abort_run(&self, run: i64);

    /// Rows of a committed run with `lat_index ∈ lat` and `lon_index ∈ lon`,
    /// in key order.
    fn scan(&self, run: i64, lat: Range<u32>, lon: Range<u32>) -> Result<Vec<RowRecord>, StoreError>;

    fn remove_manifest(&self, run: i64) -> Result<(), StoreError>;

    fn delete_rows(&self, run: i64) -> Result<(), StoreError>;

    /// Every committed manifest, for rebuilding the index on open.
    fn load_manifests(&self) -> Result<Vec<RunManifest>, StoreError>;
}

type OpenRun = (SegmentLayout, Vec<(RowKey, Arc<[f32]>)>);

/// Rows staged per run and swapped in whole when the run finishes.
#[derive(Default)]
pub struct MemoryBackend {
    rows: RwLock<BTreeMap<RowKey, Arc<[f32]>>>,
    manifests: RwLock<BTreeMap<i64, RunManifest>>,
    open: Mutex<HashMap<i64, OpenRun>>,
}

impl MemoryBackend {
    pub fn new() -> Self {
        Self::default()
    }
}

fn run_bounds(run: i64) -> std::ops::RangeInclusive<RowKey> {
    RowKey { run, lat_index: 0, lon_index: 0 }..=RowKey { run, lat_index: u32::MAX, lon_index: u32::MAX }
}

impl RowBackend for MemoryBackend {
    fn begin_run(&self, layout: SegmentLayout) -> Result<(), StoreError> {
        self.open.lock().unwrap().insert(layout.run, (layout, Vec::with_capacity(layout.row_count())));
        Ok(())
    }

    fn put_batch(&self, run: i64, batch: Vec<RowRecord>) -> Result<(), StoreError> {
        let mut open = self.open.lock().unwrap();
        let (layout, staged) =
            open.get_mut(&run).ok_or_else(|| StoreError::Backend(format!("run {run} not open for writing")))?;
        for r in batch {
            if r.block.len() != layout.block_len() {
                return Err(StoreError::Backend(format!("block of {} values, expected {}", r.block.len(), layout.block_len())));
            }
            staged.push((RowKey { run, lat_index: r.lat_index, lon_index: r.lon_index }, r.block.into()));
        }
        Ok(())
    }

    fn finish_run(&self, manifest: &RunManifest) -> Result<(), StoreError> {
        let run = manifest.run_key();
        let (layout, staged) =
            self.open.lock().unwrap().remove(&run).ok_or_else(|| StoreError::Backend(format!("run {run} not open for writing")))?;
        if staged.len() != layout.row_count() {
            return Err(StoreError::Backend(format!("{} of {} rows written", staged.len(), layout.row_count())));
        }
        self.delete_rows(run)?;
        self.rows.write().unwrap().extend(staged);
        self.manifests.write().unwrap().insert(run, manifest.clone());
        Ok(())
    }

    fn abort_run(&self, run: i64) {
        self.open.lock().unwrap().remove(&run);
    }

    fn scan(&self, run: i64, lat: Range<u32>, lon: Range<u32>) -> Result<Vec<RowRecord>, StoreError> {
        if lat.is_empty() || lon.is_empty() {
            return Ok(Vec::new());
        }
        let rows = self.rows.read().unwrap();
        let lo = RowKey { run, lat_index: lat.start, lon_index: lon.start };
        let hi = RowKey { run, lat_index: lat.end - 1, lon_index: lon.end - 1 };
        Ok(rows
            .range(lo..=hi)
            .filter(|(k, _)| lon.contains(&k.lon_index))
            .map(|(k, v)| RowRecord { lat_index: k.lat_index, lon_index: k.lon_index, block: v.to_vec() })
            .collect())
    }

    fn remove_manifest(&self, run: i64) -> Result<(), StoreError> {
        self.manifests.write().unwrap().remove(&run);
        Ok(())
    }

    fn delete_rows(&self, run: i64) -> Result<(), StoreError> {
        let mut rows = self.rows.write().unwrap();
        let keys: Vec<RowKey> = rows.range(run_bounds(run)).map(|(k, _)| *k).collect();
        for k in keys {
            rows.remove(&k);
        }
        Ok(())
    }

    fn load_manifests(&self) -> Result<Vec<RunManifest>, StoreError> {
        Ok(self.manifests.read().unwrap().values().cloned().collect())
    }
}
