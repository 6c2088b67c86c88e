use serde::{Deserialize, Serialize};

use super::{ForecastModel, InferenceError};
use crate::grid::{GridSpec, VariableCatalog};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyModelConfig {
    /// Eastward circular shift per step, in grid cells. Negative shifts west.
    pub zonal_shift_cells: i64,
    /// Weight moved to the two zonal neighbours, split evenly. In `[0, 1)`.
    pub smoothing_weight: f64,
    /// Initial-condition seed, kept with the model so a run is reproducible
    /// from its configuration alone.
    pub seed: u64,
}

impl Default for ToyModelConfig {
    fn default() -> Self {
        Self { zonal_shift_cells: 1, smoothing_weight: 0.0, seed: 0 }
    }
}

impl ToyModelConfig {
    /// 3-point zonal kernel `[west, centre, east]`; sums to one.
    pub fn kernel(&self) -> [f64; 3] {
        let side = self.smoothing_weight / 2.0;
        [side, 1.0 - self.smoothing_weight, side]
    }
}

/// Circular zonal advection with optional normalized 3-point smoothing.
/// Both operations preserve each variable's global sum.
#[derive(Debug, Clone)]
pub struct ToyModel {
    config: ToyModelConfig,
    grid: GridSpec,
    catalog: VariableCatalog,
}

impl ToyModel {
    pub fn new(config: ToyModelConfig, grid: GridSpec, catalog: VariableCatalog) -> Result<Self, InferenceError> {
        let w = config.smoothing_weight;
        if !(0.0..1.0).contains(&w) {
            return Err(InferenceError::InvalidConfig(format!("smoothing_weight {w} outside [0, 1)")));
        }
        Ok(Self { config, grid, catalog })
    }

    pub fn config(&self) -> &ToyModelConfig {
        &self.config
    }
}

impl ForecastModel for ToyModel {
    fn grid(&self) -> &GridSpec {
        &self.grid
    }

    fn catalog(&self) -> &VariableCatalog {
        &self.catalog
    }

    fn advance(&self, current: &[f32], next: &mut [f32], _step: usize) {
        let nlon = self.grid.nlon;
        let shift = self.config.zonal_shift_cells.rem_euclid(nlon as i64) as usize;
        let smooth = self.config.smoothing_weight != 0.0;
        let [w, c, e] = self.config.kernel();
        for (src, dst) in current.chunks_exact(nlon).zip(next.chunks_exact_mut(nlon)) {
            if !smooth {
                // dst[j] = src[j - shift]
                dst[shift..].copy_from_slice(&src[..nlon - shift]);
                dst[..shift].copy_from_slice(&src[nlon - shift..]);
                continue;
            }
            for (j, out) in dst.iter_mut().enumerate() {
                let centre = (j + nlon - shift) % nlon;
                let west = (centre + nlon - 1) % nlon;
                let east = (centre + 1) % nlon;
                let v = w * f64::from(src[west]) + c * f64::from(src[centre]) + e * f64::from(src[east]);
                *out = v as f32;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_catalog, grid_spec};

    #[test]
    fn kernel_sums_to_one() {
        for w in [0.0, 0.1, 0.5, 0.99] {
            let cfg = ToyModelConfig { smoothing_weight: w, ..Default::default() };
            assert!((cfg.kernel().iter().sum::<f64>() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_weight_out_of_range() {
        let g = grid_spec(30.0).unwrap();
        for w in [1.0, -0.1, f64::NAN] {
            let cfg = ToyModelConfig { smoothing_weight: w, ..Default::default() };
            assert!(ToyModel::new(cfg, g, build_catalog()).is_err());
        }
    }

    #[test]
    fn shift_moves_values_east() {
        let g = grid_spec(45.0).unwrap(); // 5 x 8
        let m = ToyModel::new(ToyModelConfig { zonal_shift_cells: 3, ..Default::default() }, g, build_catalog()).unwrap();
        let src: Vec<f32> = (0..8).map(|v| v as f32).collect();
        let mut dst = vec![0.0; 8];
        m.advance(&src, &mut dst, 1);
        assert_eq!(dst, vec![5.0, 6.0, 7.0, 0.0, 1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn negative_shift_moves_west() {
        let g = grid_spec(45.0).unwrap();
        let m = ToyModel::new(ToyModelConfig { zonal_shift_cells: -1, ..Default::default() }, g, build_catalog()).unwrap();
        let src: Vec<f32> = (0..8).map(|v| v as f32).collect();
        let mut dst = vec![0.0; 8];
        m.advance(&src, &mut dst, 1);
        assert_eq!(dst, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 0.0]);
    }
}
