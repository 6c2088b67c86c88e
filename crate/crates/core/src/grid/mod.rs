//! Coordinate system, variable catalog and grid geometry.

mod catalog;
mod coords;
mod geometry;
mod tensor;

pub use catalog::{build_catalog, VariableCatalog, VariableEntry, VariableId, VariableKind, PRESSURE_LEVELS};
pub use coords::{validate_coords, CoordinateSet, Dim, LEAD_STEP_HOURS};
pub use geometry::{bbox_indices, grid_spec, latlon_to_index, normalize_lon, BoundingBox, GridSpec, IndexSelection};
pub use tensor::ForecastTensor;

#[derive(Debug, thiserror::Error)]
pub enum GridError {
    #[error("invalid resolution {0}: must divide 180 and be a multiple of 2^-16 degrees")]
    InvalidResolution(f64),
    #[error("invalid coordinate ({lat}, {lon})")]
    InvalidCoordinate { lat: f64, lon: f64 },
    #[error("invalid bounding box {0:?}")]
    InvalidBox(BoundingBox),
    #[error("lead time {0} h is not a multiple of 6")]
    InvalidLeadTime(u32),
    #[error("coordinate systems for required dim {dim} are not the same: {detail}")]
    CoordinateMismatch { dim: Dim, detail: String },
    #[error("array of {len} values does not match shape {expected:?}")]
    ShapeMismatch { expected: Vec<usize>, len: usize },
    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },
    #[error("invalid catalog: {0}")]
    InvalidCatalog(String),
}

impl GridError {
    pub fn kind(&self) -> &'static str {
        match self {
            GridError::InvalidResolution(_) => "invalid_resolution",
            GridError::InvalidCoordinate { .. } => "invalid_coordinate",
            GridError::InvalidBox(_) => "invalid_box",
            GridError::InvalidLeadTime(_) => "invalid_lead_time",
            GridError::CoordinateMismatch { .. } => "coordinate_mismatch",
            GridError::ShapeMismatch { .. } => "shape_mismatch",
            GridError::NonFinite { .. } => "non_finite",
            GridError::InvalidCatalog(_) => "invalid_catalog",
        }
    }
}
