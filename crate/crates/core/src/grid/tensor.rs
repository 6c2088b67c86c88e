use super::{CoordinateSet, GridError};

/// Dense `f32` array laid out row-major over the six coordinate dimensions.
///
/// With `batch = time = 1` the memory layout is identical to the stored
/// lead-time-major form `(lead_time, 1, 1, 1, variable, lat, lon)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastTensor {
    values: Vec<f32>,
    coords: CoordinateSet,
}

impl ForecastTensor {
    /// Checks the extent of every axis and that all values are finite.
    pub fn new(values: Vec<f32>, coords: CoordinateSet) -> Result<Self, GridError> {
        let expected: usize = coords.shape().iter().product();
        if values.len() != expected {
            return Err(GridError::ShapeMismatch {
                expected: coords.shape().to_vec(),
                len: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(GridError::NonFinite { index });
        }
        Ok(Self { values, coords })
    }

    /// Skips the finiteness scan; callers have already checked.
    pub(crate) fn from_checked(values: Vec<f32>, coords: CoordinateSet) -> Self {
        debug_assert_eq!(values.len(), coords.shape().iter().product::<usize>());
        Self { values, coords }
    }

    pub fn coords(&self) -> &CoordinateSet {
        &self.coords
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn shape(&self) -> [usize; 6] {
        self.coords.shape()
    }

    pub fn into_parts(self) -> (Vec<f32>, CoordinateSet) {
        (self.values, self.coords)
    }

    /// Points in one lat/lon plane.
    pub fn plane_len(&self) -> usize {
        let s = self.shape();
        s[4] * s[5]
    }

    /// The lat/lon plane for `(batch, time, lead, variable)`.
    pub fn field(&self, batch: usize, time: usize, lead: usize, variable: usize) -> &[f32] {
        let s = self.shape();
        let plane = ((batch * s[1] + time) * s[2] + lead) * s[3] + variable;
        let n = self.plane_len();
        &self.values[plane * n..(plane + 1) * n]
    }

    pub fn value(&self, index: [usize; 6]) -> f32 {
        let s = self.shape();
        let mut flat = 0;
        for (i, (&k, &n)) in index.iter().zip(s.iter()).enumerate() {
            assert!(k < n, "index {k} out of bounds for axis {i} of extent {n}");
            flat = flat * n + k;
        }
        self.values[flat]
    }
}
