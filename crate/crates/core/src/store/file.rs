//! Embedded file backend: one dense, key-ordered row segment per run plus a
//! JSON manifest whose atomic rename commits the run.
//!
//! ```text
//! <root>/runs/<run basic ISO>.seg         sealed row segment
//! <root>/runs/<run basic ISO>.seg.partial segment being written
//! <root>/manifests/<run basic ISO>.json   committed RunManifest
//!
//! segment header (32 bytes)
//!   magic      8 bytes "EWSEG1\0\0"
//!   run_time   i64 LE UNIX seconds
//!   nlat       u32 LE
//!   nlon       u32 LE
//!   timesteps  u32 LE
//!   variables  u32 LE
//! rows, nlat * nlon of them in key order, each
//!   key        16 bytes, RowKey::encode
//!   block      timesteps * variables f32 LE, lead-time-major
//! ```
//!
//! Rows are fixed-size and dense, so row `(i, j)` sits at
//! `32 + (i * nlon + j) * (16 + 4 * timesteps * variables)`.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::ops::Range;
use std::os::unix::fs::FileExt;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use chrono::{TimeZone, Utc};

use super::backend::{RowBackend, RowKey, RowRecord, SegmentLayout};
use super::{RunManifest, StoreError};
use crate::cycle::iso8601_basic;

pub const SEGMENT_MAGIC: &[u8; 8] = b"EWSEG1\0\0";
pub const SEGMENT_HEADER_LEN: u64 = 32;

struct Partial {
    layout: SegmentLayout,
    out: BufWriter<File>,
    next_row: u64,
    scratch: Vec<u8>,
}

pub struct FileBackend {
    root: PathBuf,
    partial: Mutex<HashMap<i64, Partial>>,
    sealed: RwLock<HashMap<i64, (Arc<File>, SegmentLayout)>>,
}

fn run_name(run: i64) -> String {
    iso8601_basic(Utc.timestamp_opt(run, 0).single().expect("run time in range"))
}

fn encode_header(layout: &SegmentLayout) -> [u8; SEGMENT_HEADER_LEN as usize] {
    let mut h = [0u8; SEGMENT_HEADER_LEN as usize];
    h[..8].copy_from_slice(SEGMENT_MAGIC);
    h[8..16].copy_from_slice(&layout.run.to_le_bytes());
    h[16..20].copy_from_slice(&layout.nlat.to_le_bytes());
    h[20..24].copy_from_slice(&layout.nlon.to_le_bytes());
    h[24..28].copy_from_slice(&layout.timesteps.to_le_bytes());
    h[28..32].copy_from_slice(&layout.variables.to_le_bytes());
    h
}

fn decode_header(h: &[u8; SEGMENT_HEADER_LEN as usize]) -> Result<SegmentLayout, StoreError> {
    if &h[..8] != SEGMENT_MAGIC {
        return Err(StoreError::Corrupt("bad segment magic".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(h[o..o + 4].try_into().unwrap());
    Ok(SegmentLayout {
        run: i64::from_le_bytes(h[8..16].try_into().unwrap()),
        nlat: u32_at(16),
        nlon: u32_at(20),
        timesteps: u32_at(24),
        variables: u32_at(28),
    })
}

fn row_stride(layout: &SegmentLayout) -> u64 {
    16 + 4 * layout.block_len() as u64
}

fn sync_dir(path: &Path) -> io::Result<()> {
    File::open(path)?.sync_all()
}

impl FileBackend {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        fs::create_dir_all(root.join("runs"))?;
        fs::create_dir_all(root.join("manifests"))?;
        Ok(Self { root, partial: Mutex::new(HashMap::new()), sealed: RwLock::new(HashMap::new()) })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn segment_path(&self, run: i64) -> PathBuf {
        self.root.join("runs").join(format!("{}.seg", run_name(run)))
    }

    pub fn manifest_path(&self, run: i64) -> PathBuf {
        self.root.join("manifests").join(format!("{}.json", run_name(run)))
    }

    fn partial_path(&self, run: i64) -> PathBuf {
        self.root.join("runs").join(format!("{}.seg.partial", run_name(run)))
    }

    fn segment(&self, run: i64) -> Result<(Arc<File>, SegmentLayout), StoreError> {
        if let Some(s) = self.sealed.read().unwrap().get(&run) {
            return Ok(s.clone());
        }
        let file = match File::open(self.segment_path(run)) {
            Ok(f) => f,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Err(StoreError::no_such_run(run)),
            Err(e) => return Err(e.into()),
        };
        let mut h = [0u8; SEGMENT_HEADER_LEN as usize];
        file.read_exact_at(&mut h, 0)?;
        let layout = decode_header(&h)?;
        if layout.run != run {
            return Err(StoreError::Corrupt(format!("segment for {run} holds run {}", layout.run)));
        }
        let entry = (Arc::new(file), layout);
        self.sealed.write().unwrap().insert(run, entry.clone());
        Ok(entry)
    }

    /// Remove partial segments and segments without a manifest, left behind
    /// by an interrupted writer.
    fn reclaim_orphans(&self, committed: &[i64]) -> Result<(), StoreError> {
        let names: Vec<String> = committed.iter().map(|&r| run_name(r)).collect();
        for entry in fs::read_dir(self.root.join("runs"))? {
            let path = entry?.path();
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_owned();
            let keep = name
                .strip_suffix(".seg")
                .is_some_and(|stem| names.iter().any(|n| n == stem));
            if !keep {
                fs::remove_file(&path)?;
            }
        }
        Ok(())
    }
}

impl RowBackend for FileBackend {
    fn begin_run(&self, layout: SegmentLayout) -> Result<(), StoreError> {
        let file = OpenOptions::new().write(true).create(true).truncate(true).open(self.partial_path(layout.run))?;
        let mut out = BufWriter::with_capacity(1 << 20, file);
        out.write_all(&encode_header(&layout))?;
        let partial = Partial { layout, out, next_row: 0, scratch: Vec::new() };
        self.partial.lock().unwrap().insert(layout.run, partial);
        Ok(())
    }

    fn put_batch(&self, run: i64, batch: Vec<RowRecord>) -> Result<(), StoreError> {
        let mut open = self.partial.lock().unwrap();
        let p = open.get_mut(&run).ok_or_else(|| StoreError::Backend(format!("run {run} not open for writing")))?;
        let nlon = u64::from(p.layout.nlon);
        for r in batch {
            let index = u64::from(r.lat_index) * nlon + u64::from(r.lon_index);
            if index != p.next_row || r.lon_index >= p.layout.nlon {
                return Err(StoreError::Backend(format!(
                    "row ({}, {}) out of order: expected row {}",
                    r.lat_index, r.lon_index, p.next_row
                )));
            }
            if r.block.len() != p.layout.block_len() {
                return Err(StoreError::Backend(format!("block of {} values, expected {}", r.block.len(), p.layout.block_len())));
            }
            p.scratch.clear();
            p.scratch.extend_from_slice(&RowKey { run, lat_index: r.lat_index, lon_index: r.lon_index }.encode());
            for v in &r.block {
                p.scratch.extend_from_slice(&v.to_le_bytes());
            }
            p.out.write_all(&p.scratch)?;
            p.next_row += 1;
        }
        Ok(())
    }

    fn finish_run(&self, manifest: &RunManifest) -> Result<(), StoreError> {
        let run = manifest.run_key();
        let p = self
            .partial
            .lock()
            .unwrap()
            .remove(&run)
            .ok_or_else(|| StoreError::Backend(format!("run {run} not open for writing")))?;
        if p.next_row != p.layout.row_count() as u64 {
            let _ = fs::remove_file(self.partial_path(run));
            return Err(StoreError::Backend(format!("{} of {} rows written", p.next_row, p.layout.row_count())));
        }
        let file = p.out.into_inner().map_err(|e| e.into_error())?;
        file.sync_data()?;
        drop(file);
        fs::rename(self.partial_path(run), self.segment_path(run))?;
        self.sealed.write().unwrap().remove(&run);

        let path = self.manifest_path(run);
        let tmp = path.with_extension("json.tmp");
        {
            let mut f = File::create(&tmp)?;
            f.write_all(&serde_json::to_vec_pretty(manifest).expect("manifest serializes"))?;
            f.sync_all()?;
        }
        fs::rename(&tmp, &path)?;
        sync_dir(&self.root.join("manifests"))?;
        Ok(())
    }

    fn abort_run(&self, run: i64) {
        self.partial.lock().unwrap().remove(&run);
        let _ = fs::remove_file(self.partial_path(run));
    }

    fn scan(&self, run: i64, lat: Range<u32>, lon: Range<u32>) -> Result<Vec<RowRecord>, StoreError> {
        let (file, layout) = self.segment(run)?;
        let lat = lat.start..lat.end.min(layout.nlat);
        let lon = lon.start..lon.end.min(layout.nlon);
        if lat.is_empty() || lon.is_empty() {
            return Ok(Vec::new());
        }
        let stride = row_stride(&layout);
        let mut buf = vec![0u8; (stride * u64::from(lon.len() as u32)) as usize];
        let mut rows = Vec::with_capacity(lat.len() * lon.len());
        for i in lat {
            let first = u64::from(i) * u64::from(layout.nlon) + u64::from(lon.start);
            file.read_exact_at(&mut buf, SEGMENT_HEADER_LEN + first * stride)?;
            for (k, raw) in buf.chunks_exact(stride as usize).enumerate() {
                let key = RowKey::decode(raw[..16].try_into().unwrap());
                let j = lon.start + k as u32;
                if key != (RowKey { run, lat_index: i, lon_index: j }) {
                    return Err(StoreError::Corrupt(format!("row ({i}, {j}) holds key {key:?}")));
                }
                let block = raw[16..].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
                rows.push(RowRecord { lat_index: i, lon_index: j, block });
            }
        }
        Ok(rows)
    }

    fn remove_manifest(&self, run: i64) -> Result<(), StoreError> {
        match fs::remove_file(self.manifest_path(run)) {
            Ok(()) => sync_dir(&self.root.join("manifests")).map_err(Into::into),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(()),
            Err(e) => Err(e.into()),
        }
    }

    fn delete_rows(&self, run: i64) -> Result<(), StoreError> {
        self.sealed.write().unwrap().remove(&run);
        match fs::remove_file(self.segment_path(run)) {
            Ok(()) => Ok(()),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(()),
            Err(e) => Err(e.into()),
        }
    }

    fn load_manifests(&self) -> Result<Vec<RunManifest>, StoreError> {
        let mut out = Vec::new();
        for entry in fs::read_dir(self.root.join("manifests"))? {
            let path = entry?.path();
            match path.extension().and_then(|e| e.to_str()) {
                Some("json") => {
                    let m: RunManifest = serde_json::from_slice(&fs::read(&path)?)
                        .map_err(|e| StoreError::Corrupt(format!("{}: {e}", path.display())))?;
                    out.push(m);
                }
                _ => fs::remove_file(&path)?,
            }
        }
        let committed: Vec<i64> = out.iter().map(|m| m.run_key()).collect();
        self.reclaim_orphans(&committed)?;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_round_trip() {
        let l = SegmentLayout { run: 1_770_098_400, nlat: 181, nlon: 360, timesteps: 61, variables: 75 };
        let h = encode_header(&l);
        assert_eq!(&h[..8], b"EWSEG1\0\0");
        assert_eq!(decode_header(&h).unwrap(), l);
        assert_eq!(row_stride(&l), 16 + 4 * 61 * 75);
    }

    #[test]
    fn out_of_order_rows_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let b = FileBackend::open(dir.path()).unwrap();
        let layout = SegmentLayout { run: 0, nlat: 2, nlon: 2, timesteps: 1, variables: 1 };
        b.begin_run(layout).unwrap();
        let err = b.put_batch(0, vec![RowRecord { lat_index: 0, lon_index: 1, block: vec![1.0] }]);
        assert!(matches!(err, Err(StoreError::Backend(_))));
        b.abort_run(0);
        assert_eq!(fs::read_dir(dir.path().join("runs")).unwrap().count(), 0);
    }
}
