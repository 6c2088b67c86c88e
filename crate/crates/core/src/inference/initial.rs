//! Synthetic initial conditions: smooth, seeded, per-variable fields.

use std::f64::consts::PI;

use chrono::{DateTime, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::InferenceError;
use crate::cycle::is_cycle_aligned;
use crate::grid::{CoordinateSet, ForecastTensor, GridSpec, VariableCatalog, VariableEntry};

const MODES: usize = 3;

/// Standard-atmosphere height (m) of a pressure level.
fn level_height_m(level_mb: f64) -> f64 {
    44_330.8 * (1.0 - (level_mb / 1013.25).powf(0.190_263))
}

/// `(base, amplitude)` such that generated values lie in `base ± amplitude`.
fn value_range(entry: &VariableEntry) -> (f64, f64) {
    let level = entry.level.map(f64::from);
    match (entry.quantity, level) {
        ("u10m" | "v10m" | "u100m" | "v100m", _) => (0.0, 12.0),
        ("t2m", _) => (285.0, 25.0),
        ("sp", _) => (98_000.0, 3_000.0),
        ("msl", _) => (101_300.0, 1_500.0),
        ("tcwv", _) => (40.0, 40.0),
        ("sst", _) => (290.0, 12.0),
        ("tp", _) => (15.0, 15.0),
        ("u" | "v", Some(p)) => (0.0, 10.0 + 25.0 * (1.0 - p / 1000.0)),
        ("z", Some(p)) => {
            let z = 9.806_65 * level_height_m(p);
            (z, 0.02 * z + 100.0)
        }
        ("t", Some(p)) => ((288.15 - 0.0065 * level_height_m(p)).max(216.65), 10.0),
        ("q", Some(p)) => {
            let q = 0.012 * (p / 1000.0).powi(3) + 1e-6;
            (q, 0.9 * q)
        }
        _ => (0.0, 1.0),
    }
}

fn mix_seed(seed: u64, cycle: i64, variable: usize) -> u64 {
    let mut h = seed ^ 0x9E37_79B9_7F4A_7C15;
    for word in [cycle as u64, variable as u64] {
        h = (h ^ word).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h ^= h >> 31;
    }
    h
}

struct Mode {
    amplitude: f64,
    lat_wavenumber: f64,
    lat_phase: f64,
    lon_wavenumber: f64,
    lon_phase: f64,
}

fn draw_modes(rng: &mut ChaCha8Rng) -> Vec<Mode> {
    let mut modes: Vec<Mode> = (0..MODES)
        .map(|_| Mode {
            amplitude: rng.random_range(0.2..1.0),
            lat_wavenumber: f64::from(rng.random_range(1u32..=4)),
            lat_phase: rng.random_range(0.0..2.0 * PI),
            lon_wavenumber: f64::from(rng.random_range(1u32..=6)),
            lon_phase: rng.random_range(0.0..2.0 * PI),
        })
        .collect();
    let total: f64 = modes.iter().map(|m| m.amplitude).sum();
    for m in &mut modes {
        m.amplitude /= total;
    }
    modes
}

/// Deterministic initial state at lead time 0 for `cycle_time`.
///
/// Each variable is a sum of three low-wavenumber harmonics with amplitudes
/// normalized to one, scaled into a plausible physical range; `tcwv` spans
/// [0, 80] mm and `tp` [0, 30] mm.
pub fn make_initial_state(
    spec: &GridSpec,
    catalog: &VariableCatalog,
    cycle_time: DateTime<Utc>,
    seed: u64,
) -> Result<ForecastTensor, InferenceError> {
    if !is_cycle_aligned(cycle_time) {
        return Err(InferenceError::CycleAlignment(cycle_time));
    }
    let colat: Vec<f64> = (0..spec.nlat).map(|i| (90.0 - spec.lat(i)).to_radians()).collect();
    let lon: Vec<f64> = (0..spec.nlon).map(|j| spec.lon(j).to_radians()).collect();
    let plane = spec.point_count();
    let mut values = Vec::with_capacity(plane * catalog.len());
    let mut lat_terms = vec![0.0; spec.nlat * MODES];
    let mut lon_terms = vec![0.0; spec.nlon * MODES];

    for (v, entry) in catalog.entries().iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, cycle_time.timestamp(), v));
        let modes = draw_modes(&mut rng);
        for (k, m) in modes.iter().enumerate() {
            for (i, &c) in colat.iter().enumerate() {
                lat_terms[i * MODES + k] = m.amplitude * (m.lat_wavenumber * c + m.lat_phase).cos();
            }
            for (j, &l) in lon.iter().enumerate() {
                lon_terms[j * MODES + k] = (m.lon_wavenumber * l + m.lon_phase).cos();
            }
        }
        let (base, amp) = value_range(entry);
        for i in 0..spec.nlat {
            let lt = &lat_terms[i * MODES..(i + 1) * MODES];
            for j in 0..spec.nlon {
                let ln = &lon_terms[j * MODES..(j + 1) * MODES];
                let g: f64 = lt.iter().zip(ln).map(|(a, b)| a * b).sum();
                values.push((base + amp * g.clamp(-1.0, 1.0)) as f32);
            }
        }
    }
    let coords = CoordinateSet::initial(spec, catalog, cycle_time);
    ForecastTensor::new(values, coords).map_err(InferenceError::Grid)
}
