//! Grid-blob object format.
//!
//! ```text
//! magic            5 bytes  "GBLB1"
//! nlat             u32 LE
//! nlon             u32 LE
//! resolution_deg   f64 LE
//! lat_descending   u8
//! name_len         u32 LE
//! name             name_len bytes, UTF-8
//! cycle_time       i64 LE, UNIX seconds
//! values           nlat * nlon f32 LE, row-major north to south
//! ```

use chrono::{DateTime, TimeZone, Utc};

use crate::grid::{GridSpec, VariableId};

pub const BLOB_MAGIC: &[u8; 5] = b"GBLB1";

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum BlobError {
    #[error("bad magic")]
    BadMagic,
    #[error("truncated blob: needed {needed} bytes at offset {offset}")]
    Truncated { offset: usize, needed: usize },
    #[error("variable name is not UTF-8")]
    BadName,
    #[error("cycle time {0} out of range")]
    BadTime(i64),
    #[error("{values} values do not fill a {nlat}x{nlon} grid")]
    BadLength { nlat: u32, nlon: u32, values: usize },
    #[error("{0} trailing bytes")]
    Trailing(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridBlob {
    pub grid: GridSpec,
    pub variable: VariableId,
    pub cycle_time: DateTime<Utc>,
    pub values: Vec<f32>,
}

impl GridBlob {
    pub fn encode(&self) -> Vec<u8> {
        let name = self.variable.as_str().as_bytes();
        let mut out = Vec::with_capacity(5 + 4 + 4 + 8 + 1 + 4 + name.len() + 8 + 4 * self.values.len());
        out.extend_from_slice(BLOB_MAGIC);
        out.extend_from_slice(&(self.grid.nlat as u32).to_le_bytes());
        out.extend_from_slice(&(self.grid.nlon as u32).to_le_bytes());
        out.extend_from_slice(&self.grid.resolution_deg.to_le_bytes());
        out.push(u8::from(self.grid.lat_descending));
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name);
        out.extend_from_slice(&self.cycle_time.timestamp().to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, BlobError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(5)? != BLOB_MAGIC {
            return Err(BlobError::BadMagic);
        }
        let nlat = r.u32()?;
        let nlon = r.u32()?;
        let resolution_deg = f64::from_le_bytes(r.array()?);
        let lat_descending = r.take(1)?[0] != 0;
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?).map_err(|_| BlobError::BadName)?;
        let secs = i64::from_le_bytes(r.array()?);
        let cycle_time = Utc.timestamp_opt(secs, 0).single().ok_or(BlobError::BadTime(secs))?;
        let n = nlat as usize * nlon as usize;
        let raw = r.take(n.checked_mul(4).ok_or(BlobError::BadLength { nlat, nlon, values: 0 })?)?;
        let values = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        if r.pos != bytes.len() {
            return Err(BlobError::Trailing(bytes.len() - r.pos));
        }
        Ok(Self {
            grid: GridSpec { resolution_deg, nlat: nlat as usize, nlon: nlon as usize, lat_descending },
            variable: VariableId::new(name),
            cycle_time,
            values,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], BlobError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or(BlobError::Truncated { offset: self.pos, needed: n })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], BlobError> {
        Ok(self.take(N)?.try_into().unwrap())
    }

    fn u32(&mut self) -> Result<u32, BlobError> {
        Ok(u32::from_le_bytes(self.array()?))
    }
}
