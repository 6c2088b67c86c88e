//! Threshold flood-risk heuristic over a point series.
//!
//! `tp` entries are precipitation per lead-time step (mm). A rolling 24 h
//! accumulation is the sum of `24 / step` consecutive entries.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::{ForecastSeries, ServeError};
use crate::grid::LEAD_STEP_HOURS;

pub const TCWV: &str = "tcwv";
pub const TP: &str = "tp";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskConfig {
    pub tcwv_threshold_mm: f64,
    pub severe_tp_mm: f64,
    pub accumulation_hours: u32,
}

impl Default for RiskConfig {
    fn default() -> Self {
        Self { tcwv_threshold_mm: 50.0, severe_tp_mm: 100.0, accumulation_hours: 24 }
    }
}

impl RiskConfig {
    /// Entries per accumulation window.
    pub fn window_len(&self) -> usize {
        (self.accumulation_hours / LEAD_STEP_HOURS).max(1) as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskLevel {
    Normal,
    Elevated,
    Severe,
}

impl RiskLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            RiskLevel::Normal => "normal",
            RiskLevel::Elevated => "elevated",
            RiskLevel::Severe => "severe",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "normal" => Some(RiskLevel::Normal),
            "elevated" => Some(RiskLevel::Elevated),
            "severe" => Some(RiskLevel::Severe),
            _ => None,
        }
    }
}

impl fmt::Display for RiskLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One contiguous breach: the peak `value` against `threshold`, over lead
/// hours `window.0..=window.1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Signal {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub window: (u32, u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskAssessment {
    pub level: RiskLevel,
    pub signals: Vec<Signal>,
    /// Span of all signals; `None` when nothing breached.
    pub window: Option<(u32, u32)>,
}

/// `out[k] = values[k] + ... + values[k + width - 1]`. A series shorter than
/// `width` yields one sum over all of it.
pub fn rolling_sums(values: &[f64], width: usize) -> Vec<f64> {
    if values.is_empty() {
        return Vec::new();
    }
    let width = width.clamp(1, values.len());
    values.windows(width).map(|w| w.iter().sum()).collect()
}

/// Maximal runs of consecutive `true`, as inclusive index pairs.
fn episodes(flags: impl Iterator<Item = bool>) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    let mut last = 0;
    for (k, f) in flags.enumerate() {
        match (f, start) {
            (true, None) => start = Some(k),
            (false, Some(s)) => {
                out.push((s, k - 1));
                start = None;
            }
            _ => {}
        }
        last = k;
    }
    if let Some(s) = start {
        out.push((s, last));
    }
    out
}

fn required(series: &ForecastSeries, name: &str) -> Result<Vec<f64>, ServeError> {
    let v = series.values(name).ok_or_else(|| ServeError::MissingSignal(name.to_owned()))?;
    Ok(v.iter().map(|&x| f64::from(x)).collect())
}

/// Elevated when tcwv exceeds its threshold anywhere in the horizon (or a
/// 24 h tp accumulation alone exceeds the severe threshold); severe when both
/// breach.
pub fn assess_flood_risk(series: &ForecastSeries, cfg: &RiskConfig) -> Result<RiskAssessment, ServeError> {
    let tcwv = required(series, TCWV)?;
    let tp = required(series, TP)?;
    let leads = &series.lead_hours;
    let mut signals = Vec::new();

    for (a, b) in episodes(tcwv.iter().map(|&v| v > cfg.tcwv_threshold_mm)) {
        let peak = tcwv[a..=b].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        signals.push(Signal { name: TCWV.into(), value: peak, threshold: cfg.tcwv_threshold_mm, window: (leads[a], leads[b]) });
    }
    let tcwv_breached = !signals.is_empty();

    let width = cfg.window_len().min(tp.len().max(1));
    let sums = rolling_sums(&tp, width);
    let mut tp_breached = false;
    for (a, b) in episodes(sums.iter().map(|&s| s > cfg.severe_tp_mm)) {
        let peak = sums[a..=b].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        signals.push(Signal {
            name: format!("{TP}_{}h", cfg.accumulation_hours),
            value: peak,
            threshold: cfg.severe_tp_mm,
            window: (leads[a], leads[b + width - 1]),
        });
        tp_breached = true;
    }

    let level = match (tcwv_breached, tp_breached) {
        (true, true) => RiskLevel::Severe,
        (false, false) => RiskLevel::Normal,
        _ => RiskLevel::Elevated,
    };
    let window = signals.iter().map(|s| s.window).reduce(|x, y| (x.0.min(y.0), x.1.max(y.1)));
    Ok(RiskAssessment { level, signals, window })
}

/// Largest rolling accumulation of `tp`, for display.
pub fn peak_accumulation(series: &ForecastSeries, cfg: &RiskConfig) -> Option<f64> {
    let tp: Vec<f64> = series.values(TP)?.iter().map(|&x| f64::from(x)).collect();
    rolling_sums(&tp, cfg.window_len()).into_iter().reduce(f64::max)
}
