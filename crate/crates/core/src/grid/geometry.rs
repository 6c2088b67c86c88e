//! Regular lat/lon grid geometry, nearest-node snapping and bounding-box selection.
//!
//! Latitudes run north to south (index 0 is +90°); longitudes run eastward
//! from 0° to `360 - resolution`.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::GridError;

/// Resolutions must be multiples of this binary fraction so every grid
/// coordinate is exactly representable.
const RESOLUTION_QUANTUM_INV: f64 = 65_536.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub resolution_deg: f64,
    pub nlat: usize,
    pub nlon: usize,
    pub lat_descending: bool,
}

/// Build the global grid at `resolution_deg`.
///
/// The resolution must divide 180 and be a multiple of 2^-16 degrees, which
/// keeps latitudes and longitudes exact in binary floating point (so 0.25 and
/// 1.0 are accepted, 0.3 or 0.1 are not).
pub fn grid_spec(resolution_deg: f64) -> Result<GridSpec, GridError> {
    if !resolution_deg.is_finite() || resolution_deg <= 0.0 {
        return Err(GridError::InvalidResolution(resolution_deg));
    }
    let scaled = resolution_deg * RESOLUTION_QUANTUM_INV;
    if scaled.fract() != 0.0 || scaled > 180.0 * RESOLUTION_QUANTUM_INV {
        return Err(GridError::InvalidResolution(resolution_deg));
    }
    let quanta = scaled as u64;
    let half_turn = 180 * RESOLUTION_QUANTUM_INV as u64;
    if !half_turn.is_multiple_of(quanta) {
        return Err(GridError::InvalidResolution(resolution_deg));
    }
    let steps = (half_turn / quanta) as usize;
    Ok(GridSpec {
        resolution_deg,
        nlat: steps + 1,
        nlon: 2 * steps,
        lat_descending: true,
    })
}

impl GridSpec {
    pub fn point_count(&self) -> usize {
        self.nlat * self.nlon
    }

    pub fn lat(&self, index: usize) -> f64 {
        90.0 - index as f64 * self.resolution_deg
    }

    pub fn lon(&self, index: usize) -> f64 {
        index as f64 * self.resolution_deg
    }

    pub fn latitudes(&self) -> Vec<f64> {
        (0..self.nlat).map(|i| self.lat(i)).collect()
    }

    pub fn longitudes(&self) -> Vec<f64> {
        (0..self.nlon).map(|j| self.lon(j)).collect()
    }

    /// Nearest grid node; see [`latlon_to_index`].
    pub fn index_of(&self, lat: f64, lon: f64) -> Result<(usize, usize), GridError> {
        latlon_to_index(self, lat, lon)
    }
}

/// Round to nearest, with exact halves going to the lower index.
fn nearest_lower_on_tie(x: f64) -> f64 {
    (x - 0.5).ceil()
}

/// Normalize any finite longitude into `[0, 360)`.
pub fn normalize_lon(lon: f64) -> f64 {
    let l = lon.rem_euclid(360.0);
    // rem_euclid can round up to exactly 360 for tiny negative inputs.
    if l >= 360.0 {
        0.0
    } else {
        l
    }
}

/// Snap `(lat, lon)` to the nearest grid node.
pub fn latlon_to_index(spec: &GridSpec, lat: f64, lon: f64) -> Result<(usize, usize), GridError> {
    if !lat.is_finite() || !lon.is_finite() || !(-90.0..=90.0).contains(&lat) {
        return Err(GridError::InvalidCoordinate { lat, lon });
    }
    let res = spec.resolution_deg;
    let i = nearest_lower_on_tie((90.0 - lat) / res).clamp(0.0, (spec.nlat - 1) as f64) as usize;
    let j = nearest_lower_on_tie(normalize_lon(lon) / res).max(0.0) as usize;
    Ok((i, if j >= spec.nlon { j - spec.nlon } else { j }))
}

/// Inclusive lat/lon rectangle. `lon_min > lon_max` wraps across 0°.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

impl BoundingBox {
    pub fn new(lat_min: f64, lat_max: f64, lon_min: f64, lon_max: f64) -> Result<Self, GridError> {
        let b = Self { lat_min, lat_max, lon_min, lon_max };
        let lat_ok = |v: f64| v.is_finite() && (-90.0..=90.0).contains(&v);
        let lon_ok = |v: f64| v.is_finite() && (0.0..360.0).contains(&v);
        if !(lat_ok(lat_min) && lat_ok(lat_max) && lat_min <= lat_max && lon_ok(lon_min) && lon_ok(lon_max)) {
            return Err(GridError::InvalidBox(b));
        }
        Ok(b)
    }

    /// The whole globe.
    pub fn global() -> Self {
        Self {
            lat_min: -90.0,
            lat_max: 90.0,
            lon_min: 0.0,
            lon_max: f64::from_bits(360f64.to_bits() - 1),
        }
    }

    /// Square box of half-width `half_deg` around a point, clamped at the
    /// poles and wrapping in longitude as needed.
    pub fn around(lat: f64, lon: f64, half_deg: f64) -> Result<Self, GridError> {
        if !lat.is_finite() || !lon.is_finite() || !half_deg.is_finite() || half_deg < 0.0 {
            return Err(GridError::InvalidCoordinate { lat, lon });
        }
        if half_deg >= 180.0 {
            let mut g = Self::global();
            g.lat_min = (lat - half_deg).max(-90.0);
            g.lat_max = (lat + half_deg).min(90.0);
            return Self::new(g.lat_min, g.lat_max, g.lon_min, g.lon_max);
        }
        Self::new(
            (lat - half_deg).max(-90.0),
            (lat + half_deg).min(90.0),
            normalize_lon(lon - half_deg),
            normalize_lon(lon + half_deg),
        )
    }

    pub fn wraps(&self) -> bool {
        self.lon_min > self.lon_max
    }

    pub fn contains(&self, lat: f64, lon: f64) -> bool {
        let lat_in = self.lat_min <= lat && lat <= self.lat_max;
        let lon_in = if self.wraps() {
            lon >= self.lon_min || lon <= self.lon_max
        } else {
            self.lon_min <= lon && lon <= self.lon_max
        };
        lat_in && lon_in
    }
}

/// Grid indices selected by a bounding box: one latitude range and one or
/// two longitude ranges, sorted by start.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexSelection {
    pub lat: Range<usize>,
    pub lon: Vec<Range<usize>>,
}

impl IndexSelection {
    pub fn count(&self) -> usize {
        self.lat.len() * self.lon.iter().map(|r| r.len()).sum::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    /// `(lat_index, lon_index)` pairs in (lat desc, lon asc) order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.lat
            .clone()
            .flat_map(move |i| self.lon.iter().flat_map(move |r| r.clone().map(move |j| (i, j))))
    }
}

/// First index in `0..n` whose coordinate satisfies `coord(k) <= bound` for a
/// decreasing coordinate, found from an estimate and corrected so the result
/// agrees with direct comparison.
fn first_at_or_below(n: usize, estimate: f64, bound: f64, coord: impl Fn(usize) -> f64) -> usize {
    let mut k = estimate.ceil().clamp(0.0, n as f64) as usize;
    while k > 0 && coord(k - 1) <= bound {
        k -= 1;
    }
    while k < n && coord(k) > bound {
        k += 1;
    }
    k
}

/// First index in `0..n` whose increasing coordinate is `>= bound`.
fn first_at_or_above(n: usize, estimate: f64, bound: f64, coord: impl Fn(usize) -> f64) -> usize {
    let mut k = estimate.ceil().clamp(0.0, n as f64) as usize;
    while k > 0 && coord(k - 1) >= bound {
        k -= 1;
    }
    while k < n && coord(k) < bound {
        k += 1;
    }
    k
}

/// One past the last index whose increasing coordinate is `<= bound`.
fn end_at_or_below(n: usize, estimate: f64, bound: f64, coord: impl Fn(usize) -> f64) -> usize {
    let mut k = (estimate.floor() + 1.0).clamp(0.0, n as f64) as usize;
    while k > 0 && coord(k - 1) > bound {
        k -= 1;
    }
    while k < n && coord(k) <= bound {
        k += 1;
    }
    k
}

/// All grid nodes inside `bbox`, inclusive on every edge.
pub fn bbox_indices(spec: &GridSpec, bbox: &BoundingBox) -> IndexSelection {
    let res = spec.resolution_deg;
    let lat_of = |i: usize| spec.lat(i);
    let lat_start = first_at_or_below(spec.nlat, (90.0 - bbox.lat_max) / res, bbox.lat_max, lat_of);
    // Latitudes decrease with index: the end is the first index below lat_min.
    let mut lat_end = ((90.0 - bbox.lat_min) / res).floor().clamp(-1.0, spec.nlat as f64 - 1.0) as isize + 1;
    while lat_end > 0 && spec.lat(lat_end as usize - 1) < bbox.lat_min {
        lat_end -= 1;
    }
    while (lat_end as usize) < spec.nlat && spec.lat(lat_end as usize) >= bbox.lat_min {
        lat_end += 1;
    }
    let lat_end = (lat_end as usize).max(lat_start);

    let lon_of = |j: usize| spec.lon(j);
    let n = spec.nlon;
    let lon_range = |lo: f64, hi: f64| {
        let start = first_at_or_above(n, lo / res, lo, lon_of);
        let end = end_at_or_below(n, hi / res, hi, lon_of);
        start..end.max(start)
    };
    let mut lon = if bbox.wraps() {
        vec![lon_range(0.0, bbox.lon_max), lon_range(bbox.lon_min, 360.0)]
    } else {
        vec![lon_range(bbox.lon_min, bbox.lon_max)]
    };
    lon.retain(|r| !r.is_empty());
    IndexSelection { lat: lat_start..lat_end, lon }
}
