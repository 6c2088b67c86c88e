//! Deployment economics in integer cents.

use std::fmt;

use serde::{Deserialize, Serialize};

/// US cents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Cents(pub i64);

impl Cents {
    pub fn dollars(d: i64) -> Self {
        Cents(d * 100)
    }

    /// Parse `"1,087.70"`, `"1087.7"` or `"$40"`; at most two decimals.
    pub fn parse(s: &str) -> Option<Self> {
        let t: String = s.trim().trim_start_matches('$').chars().filter(|&c| c != ',' && c != '_').collect();
        let (neg, t) = match t.strip_prefix('-') {
            Some(rest) => (true, rest.to_owned()),
            None => (false, t),
        };
        let (whole, frac) = t.split_once('.').unwrap_or((&t, ""));
        if whole.is_empty() && frac.is_empty() || frac.len() > 2 || !whole.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
            return None;
        }
        let whole: i64 = if whole.is_empty() { 0 } else { whole.parse().ok()? };
        let frac: i64 = if frac.is_empty() { 0 } else { format!("{frac:0<2}").parse().ok()? };
        let v = whole.checked_mul(100)?.checked_add(frac)?;
        Some(Cents(if neg { -v } else { v }))
    }
}

impl fmt::Display for Cents {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        let digits = (abs / 100).to_string();
        let mut grouped = String::with_capacity(digits.len() + digits.len() / 3);
        for (k, c) in digits.chars().enumerate() {
            if k > 0 && (digits.len() - k).is_multiple_of(3) {
                grouped.push(',');
            }
            grouped.push(c);
        }
        write!(f, "{sign}${grouped}.{:02}", abs % 100)
    }
}

/// Inclusive `low..=high` pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span<T> {
    pub low: T,
    pub high: T,
}

impl<T: Copy + PartialOrd> Span<T> {
    pub fn new(low: T, high: T) -> Self {
        Self { low, high }
    }

    pub fn is_ordered(&self) -> bool {
        self.low <= self.high
    }
}

impl Span<Cents> {
    fn map(self, f: impl Fn(i64) -> i64) -> Self {
        Span::new(Cents(f(self.low.0)), Cents(f(self.high.0)))
    }
}

impl fmt::Display for Span<Cents> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}–{}", self.low, self.high)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub gpu_hourly: Cents,
    pub hours_per_month: i64,
    pub cpu_instances: Span<i64>,
    pub cpu_monthly_each: Span<Cents>,
    pub db_monthly: Span<Cents>,
    pub radar_capital: Span<Cents>,
    /// Maintenance over the whole `years` horizon.
    pub radar_maintenance: Cents,
    pub years: i64,
}

impl CostModel {
    pub fn validate(&self) -> Result<(), String> {
        let nonneg = [
            self.gpu_hourly.0,
            self.hours_per_month,
            self.cpu_instances.low,
            self.cpu_monthly_each.low.0,
            self.db_monthly.low.0,
            self.radar_capital.low.0,
            self.radar_maintenance.0,
            self.years,
        ];
        if nonneg.iter().any(|&v| v < 0) {
            return Err("cost inputs must be non-negative".into());
        }
        let ordered = self.cpu_instances.is_ordered()
            && self.cpu_monthly_each.is_ordered()
            && self.db_monthly.is_ordered()
            && self.radar_capital.is_ordered();
        if !ordered {
            return Err("every range must have low <= high".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub gpu_monthly: Cents,
    pub cpu_monthly: Span<Cents>,
    pub db_monthly: Span<Cents>,
    pub monthly: Span<Cents>,
    pub annual: Span<Cents>,
    pub horizon_total: Span<Cents>,
    pub years: i64,
    pub radar_total: Span<Cents>,
    /// `radar_low / ai_high` and `radar_high / ai_low`, truncated; `None`
    /// when the AI total is zero.
    pub ratio: Span<Option<i64>>,
}

fn ratio(num: Cents, den: Cents) -> Option<i64> {
    (den.0 != 0).then(|| num.0 / den.0)
}

/// Annual, horizon and ratio figures from a monthly range.
pub fn costs_from_monthly(monthly: Span<Cents>, years: i64, radar_total: Span<Cents>) -> (Span<Cents>, Span<Cents>, Span<Option<i64>>) {
    let annual = monthly.map(|m| m * 12);
    let horizon = annual.map(|a| a * years);
    let ratio = Span::new(ratio(radar_total.low, horizon.high), ratio(radar_total.high, horizon.low));
    (annual, horizon, ratio)
}

pub fn compute_costs(m: &CostModel) -> CostReport {
    let gpu = Cents(m.gpu_hourly.0 * m.hours_per_month);
    let cpu = Span::new(
        Cents(m.cpu_instances.low * m.cpu_monthly_each.low.0),
        Cents(m.cpu_instances.high * m.cpu_monthly_each.high.0),
    );
    let monthly = Span::new(
        Cents(gpu.0 + cpu.low.0 + m.db_monthly.low.0),
        Cents(gpu.0 + cpu.high.0 + m.db_monthly.high.0),
    );
    let radar_total = m.radar_capital.map(|c| c + m.radar_maintenance.0);
    let (annual, horizon_total, ratio) = costs_from_monthly(monthly, m.years, radar_total);
    CostReport {
        gpu_monthly: gpu,
        cpu_monthly: cpu,
        db_monthly: m.db_monthly,
        monthly,
        annual,
        horizon_total,
        years: m.years,
        radar_total,
        ratio,
    }
}
