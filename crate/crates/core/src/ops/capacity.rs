//! Serving-capacity arithmetic over exact rationals.

use num_rational::Ratio;
use serde::Serialize;

use super::costs::Span;

pub type Q = Ratio<i128>;

/// Headroom that reproduces the published 5–10 instance range for the
/// national preset. Any factor in (45/28, 25/14] does.
pub fn default_headroom() -> Q {
    Q::new(7, 4)
}

/// Parse `"28/60"`, `"0.30"` or `"2"` exactly. Exponents are not accepted.
pub fn parse_ratio(s: &str) -> Option<Q> {
    let s = s.trim();
    if let Some((n, d)) = s.split_once('/') {
        let (n, d) = (parse_ratio(n)?, parse_ratio(d)?);
        return (*d.numer() != 0).then(|| n / d);
    }
    let (neg, s) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let (whole, frac) = s.split_once('.').unwrap_or((s, ""));
    if whole.is_empty() && frac.is_empty() || !whole.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits = format!("{whole}{frac}");
    let n: i128 = digits.parse().ok()?;
    let d = 10i128.checked_pow(frac.len() as u32)?;
    let q = Q::new(n, d);
    Some(if neg { -q } else { q })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapacityModel {
    pub population: i128,
    pub addressable_fraction: Q,
    pub engagement_fraction: Q,
    pub peak_concurrent_fraction: Q,
    pub per_instance_rps: Span<i128>,
    pub headroom: Q,
}

impl CapacityModel {
    pub fn validate(&self) -> Result<(), String> {
        if self.population <= 0 {
            return Err("population must be positive".into());
        }
        let unit = Q::from_integer(0)..=Q::from_integer(1);
        for (name, f) in [
            ("addressable_fraction", self.addressable_fraction),
            ("engagement_fraction", self.engagement_fraction),
            ("peak_concurrent_fraction", self.peak_concurrent_fraction),
        ] {
            if !unit.contains(&f) {
                return Err(format!("{name} must lie in [0, 1]"));
            }
        }
        if self.per_instance_rps.low <= 0 || !self.per_instance_rps.is_ordered() {
            return Err("per-instance rps must be a positive, ordered range".into());
        }
        if self.headroom < Q::from_integer(1) {
            return Err("headroom must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CapacityReport {
    #[serde(serialize_with = "ser_q")]
    pub addressable: Q,
    #[serde(serialize_with = "ser_q")]
    pub active: Q,
    #[serde(serialize_with = "ser_q")]
    pub peak_per_minute: Q,
    #[serde(serialize_with = "ser_q")]
    pub peak_per_second: Q,
    /// Instance range from raw division: the low end uses the high
    /// per-instance rate.
    pub instances_raw: Span<i128>,
    pub instances_with_headroom: Span<i128>,
    #[serde(serialize_with = "ser_q")]
    pub headroom: Q,
}

fn ser_q<S: serde::Serializer>(q: &Q, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&format_q(q))
}

/// Exact decimal when it terminates within six places, else six decimals.
pub fn format_q(q: &Q) -> String {
    if q.is_integer() {
        return q.to_integer().to_string();
    }
    for places in 1..=6u32 {
        let scaled = q * Q::from_integer(10i128.pow(places));
        if scaled.is_integer() {
            let v = scaled.to_integer();
            let (sign, v) = if v < 0 { ("-", -v) } else { ("", v) };
            let unit = 10i128.pow(places);
            return format!("{sign}{}.{:0w$}", v / unit, v % unit, w = places as usize);
        }
    }
    format!("{:.6}", *q.numer() as f64 / *q.denom() as f64)
}

fn ceil_div(q: Q, rate: i128) -> i128 {
    (q / Q::from_integer(rate)).ceil().to_integer()
}

pub fn compute_capacity(c: &CapacityModel) -> CapacityReport {
    let addressable = Q::from_integer(c.population) * c.addressable_fraction;
    let active = addressable * c.engagement_fraction;
    let peak_per_minute = active * c.peak_concurrent_fraction;
    let peak_per_second = peak_per_minute / Q::from_integer(60);
    let instances = |load: Q| Span::new(ceil_div(load, c.per_instance_rps.high), ceil_div(load, c.per_instance_rps.low));
    CapacityReport {
        addressable,
        active,
        peak_per_minute,
        peak_per_second,
        instances_raw: instances(peak_per_second),
        instances_with_headroom: instances(peak_per_second * c.headroom),
        headroom: c.headroom,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn reference() -> CapacityModel {
        CapacityModel {
            population: 60_000_000,
            addressable_fraction: Q::new(28, 60),
            engagement_fraction: parse_ratio("0.30").unwrap(),
            peak_concurrent_fraction: parse_ratio("0.02").unwrap(),
            per_instance_rps: Span::new(500, 1000),
            headroom: default_headroom(),
        }
    }

    #[test]
    fn national_figures() {
        let r = compute_capacity(&reference());
        assert_eq!(r.addressable, Q::from_integer(28_000_000));
        assert_eq!(r.active, Q::from_integer(8_400_000));
        assert_eq!(r.peak_per_minute, Q::from_integer(168_000));
        assert_eq!(r.peak_per_second, Q::from_integer(2_800));
        assert_eq!(r.instances_raw, Span::new(3, 6));
        assert_eq!(r.instances_with_headroom, Span::new(5, 10));
    }

    #[test]
    fn headroom_that_matches_five_to_ten() {
        // Brute force over hundredths: which factors give exactly 5..=10.
        let ok: Vec<i128> = (100..=300)
            .filter(|&h| {
                let mut m = reference();
                m.headroom = Q::new(h, 100);
                compute_capacity(&m).instances_with_headroom == Span::new(5, 10)
            })
            .collect();
        assert_eq!((ok[0], *ok.last().unwrap()), (161, 178));
        let mut m = reference();
        m.headroom = Q::new(18, 10);
        assert_eq!(compute_capacity(&m).instances_with_headroom, Span::new(6, 11));
    }

    #[test]
    fn degenerate_models() {
        let mut m = reference();
        m.engagement_fraction = Q::from_integer(0);
        let r = compute_capacity(&m);
        assert_eq!(r.peak_per_second, Q::from_integer(0));
        assert_eq!(r.instances_raw, Span::new(0, 0));
        let unit = CapacityModel {
            population: 1,
            addressable_fraction: Q::from_integer(1),
            engagement_fraction: Q::from_integer(1),
            peak_concurrent_fraction: Q::from_integer(1),
            per_instance_rps: Span::new(1, 1),
            headroom: Q::from_integer(1),
        };
        assert_eq!(compute_capacity(&unit).peak_per_second, Q::new(1, 60));
    }

    #[test]
    fn ratio_parsing() {
        assert_eq!(parse_ratio("28/60"), Some(Q::new(7, 15)));
        assert_eq!(parse_ratio("0.30"), Some(Q::new(3, 10)));
        assert_eq!(parse_ratio("1.75"), Some(Q::new(7, 4)));
        assert_eq!(parse_ratio("1/0"), None);
        assert_eq!(parse_ratio("x"), None);
        assert_eq!(format_q(&Q::new(1, 60)), "0.016667");
        assert_eq!(format_q(&Q::new(7, 4)), "1.75");
        assert_eq!(format_q(&Q::new(-1, 20)), "-0.05");
        assert_eq!(format_q(&Q::new(8_400_000, 1)), "8400000");
    }

    proptest! {
        #[test]
        fn more_people_never_lower_peak(p in 1i128..100_000_000, extra in 0i128..10_000_000) {
            let mut a = reference();
            a.population = p;
            let mut b = a.clone();
            b.population = p + extra;
            let (ra, rb) = (compute_capacity(&a), compute_capacity(&b));
            prop_assert!(rb.peak_per_second >= ra.peak_per_second);
            prop_assert!(rb.instances_raw.high >= ra.instances_raw.high);
        }
    }
}
