//! The by-value fetch record and its wire encoding.
//!
//! ```text
//! magic        5 bytes "FRES1"
//! header_len   u32 LE, then a JSON header {shape, dims, time, variable}
//! nlat_coords  u32 LE, then that many f64 LE latitudes
//! nlon_coords  u32 LE, then that many f64 LE longitudes
//! n_values     u64 LE, then that many f32 LE values
//! ```

use serde::{Deserialize, Serialize};

pub const RESULT_MAGIC: &[u8; 5] = b"FRES1";

pub const FETCH_DIMS: [&str; 4] = ["time", "variable", "lat", "lon"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FetchCoords {
    pub time: Vec<String>,
    pub variable: Vec<String>,
    pub lat: Vec<f64>,
    pub lon: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FetchResult {
    pub values: Vec<f32>,
    pub shape: Vec<usize>,
    pub dims: Vec<String>,
    pub coords: FetchCoords,
}

#[derive(Serialize, Deserialize)]
struct Header {
    shape: Vec<usize>,
    dims: Vec<String>,
    time: Vec<String>,
    variable: Vec<String>,
}

impl FetchResult {
    /// Checks the record's internal consistency.
    pub fn check(&self) -> Result<(), String> {
        let product: usize = self.shape.iter().product();
        if product != self.values.len() {
            return Err(format!("shape {:?} does not hold {} values", self.shape, self.values.len()));
        }
        if self.dims != FETCH_DIMS {
            return Err(format!("dims {:?}, expected {FETCH_DIMS:?}", self.dims));
        }
        let c = &self.coords;
        let lens = [c.time.len(), c.variable.len(), c.lat.len(), c.lon.len()];
        if self.shape != lens {
            return Err(format!("shape {:?} disagrees with coordinate lengths {lens:?}", self.shape));
        }
        Ok(())
    }

    /// The lat/lon plane of `variable` at the first time.
    pub fn field(&self, variable: &str) -> Option<&[f32]> {
        let v = self.coords.variable.iter().position(|n| n == variable)?;
        let plane = self.coords.lat.len() * self.coords.lon.len();
        Some(&self.values[v * plane..(v + 1) * plane])
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&Header {
            shape: self.shape.clone(),
            dims: self.dims.clone(),
            time: self.coords.time.clone(),
            variable: self.coords.variable.clone(),
        })
        .expect("header is serializable");
        let mut out = Vec::with_capacity(
            5 + 4 + header.len() + 8 + 8 * (self.coords.lat.len() + self.coords.lon.len()) + 8 + 4 * self.values.len(),
        );
        out.extend_from_slice(RESULT_MAGIC);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for axis in [&self.coords.lat, &self.coords.lon] {
            out.extend_from_slice(&(axis.len() as u32).to_le_bytes());
            for v in axis {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out.extend_from_slice(&(self.values.len() as u64).to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, String> {
        let mut pos = 0usize;
        let mut take = |n: usize| -> Result<&[u8], String> {
            let end = pos.checked_add(n).filter(|&e| e <= bytes.len()).ok_or("truncated fetch result")?;
            let s = &bytes[pos..end];
            pos = end;
            Ok(s)
        };
        if take(5)? != RESULT_MAGIC {
            return Err("bad fetch-result magic".into());
        }
        let header_len = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let header: Header = serde_json::from_slice(take(header_len)?).map_err(|e| e.to_string())?;
        let mut axes = Vec::with_capacity(2);
        for _ in 0..2 {
            let n = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
            let raw = take(n.checked_mul(8).ok_or("axis too long")?)?;
            axes.push(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect::<Vec<_>>());
        }
        let n = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
        let raw = take(n.checked_mul(4).ok_or("too many values")?)?;
        let values = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        if pos != bytes.len() {
            return Err(format!("{} trailing bytes", bytes.len() - pos));
        }
        let lon = axes.pop().unwrap();
        let lat = axes.pop().unwrap();
        Ok(Self {
            values,
            shape: header.shape,
            dims: header.dims,
            coords: FetchCoords { time: header.time, variable: header.variable, lat, lon },
        })
    }
}
