//! Calculator inputs as TOML files, plus published figures to reconcile.

use std::path::Path;

use earlywarn_core::ops::{
    compute_capacity, compute_costs, costs_from_monthly, format_q, parse_ratio, CapacityModel, CapacityReport, Cents,
    CostModel, CostReport, Span, Q,
};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::Error;

const COSTS_PAPER: &str = include_str!("../presets/costs-paper.toml");
const CAPACITY_PAPER: &str = include_str!("../presets/capacity-paper.toml");

/// A TOML number or numeric string. Strings keep decimals exact.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum Num {
    Int(i64),
    Float(f64),
    Str(String),
}

impl Num {
    fn text(&self) -> String {
        match self {
            Num::Int(i) => i.to_string(),
            Num::Float(f) => f.to_string(),
            Num::Str(s) => s.clone(),
        }
    }

    fn cents(&self, field: &str) -> Result<Cents, Error> {
        Cents::parse(&self.text()).ok_or_else(|| Error::invalid(format!("{field}: `{}` is not a dollar amount", self.text())))
    }

    fn ratio(&self, field: &str) -> Result<Q, Error> {
        parse_ratio(&self.text()).ok_or_else(|| Error::invalid(format!("{field}: `{}` is not an exact number", self.text())))
    }
}

fn cents_span(v: &[Num; 2], field: &str) -> Result<Span<Cents>, Error> {
    Ok(Span::new(v[0].cents(field)?, v[1].cents(field)?))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CostFile {
    gpu_hourly: Num,
    hours_per_month: i64,
    cpu_instances: [i64; 2],
    cpu_monthly_each: [Num; 2],
    db_monthly: [Num; 2],
    radar_capital: [Num; 2],
    radar_maintenance: Num,
    years: i64,
    published: Option<PublishedCostFile>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PublishedCostFile {
    monthly: [Num; 2],
    annual: [Num; 2],
    horizon_total: [Num; 2],
    radar_total: [Num; 2],
    ratio: [i64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PublishedCosts {
    pub monthly: Span<Cents>,
    pub annual: Span<Cents>,
    pub horizon_total: Span<Cents>,
    pub radar_total: Span<Cents>,
    pub ratio: Span<i64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostPreset {
    pub model: CostModel,
    pub published: Option<PublishedCosts>,
}

pub fn parse_cost_preset(text: &str) -> Result<CostPreset, Error> {
    let f: CostFile = toml::from_str(text).map_err(|e| Error::invalid(format!("cost preset: {e}")))?;
    let model = CostModel {
        gpu_hourly: f.gpu_hourly.cents("gpu_hourly")?,
        hours_per_month: f.hours_per_month,
        cpu_instances: Span::new(f.cpu_instances[0], f.cpu_instances[1]),
        cpu_monthly_each: cents_span(&f.cpu_monthly_each, "cpu_monthly_each")?,
        db_monthly: cents_span(&f.db_monthly, "db_monthly")?,
        radar_capital: cents_span(&f.radar_capital, "radar_capital")?,
        radar_maintenance: f.radar_maintenance.cents("radar_maintenance")?,
        years: f.years,
    };
    model.validate().map_err(Error::invalid)?;
    let published = f
        .published
        .map(|p| {
            Ok::<_, Error>(PublishedCosts {
                monthly: cents_span(&p.monthly, "published.monthly")?,
                annual: cents_span(&p.annual, "published.annual")?,
                horizon_total: cents_span(&p.horizon_total, "published.horizon_total")?,
                radar_total: cents_span(&p.radar_total, "published.radar_total")?,
                ratio: Span::new(p.ratio[0], p.ratio[1]),
            })
        })
        .transpose()?;
    Ok(CostPreset { model, published })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CapacityFile {
    population: i64,
    addressable_fraction: Num,
    engagement_fraction: Num,
    peak_concurrent_fraction: Num,
    per_instance_rps: [i64; 2],
    headroom: Option<Num>,
    published: Option<PublishedCapacity>,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PublishedCapacity {
    pub addressable: i64,
    pub active: i64,
    pub peak_per_minute: i64,
    pub peak_per_second: i64,
    pub instances: [i64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapacityPreset {
    pub model: CapacityModel,
    pub published: Option<PublishedCapacity>,
}

pub fn parse_capacity_preset(text: &str) -> Result<CapacityPreset, Error> {
    let f: CapacityFile = toml::from_str(text).map_err(|e| Error::invalid(format!("capacity preset: {e}")))?;
    let model = CapacityModel {
        population: f.population.into(),
        addressable_fraction: f.addressable_fraction.ratio("addressable_fraction")?,
        engagement_fraction: f.engagement_fraction.ratio("engagement_fraction")?,
        peak_concurrent_fraction: f.peak_concurrent_fraction.ratio("peak_concurrent_fraction")?,
        per_instance_rps: Span::new(f.per_instance_rps[0].into(), f.per_instance_rps[1].into()),
        headroom: match f.headroom {
            Some(h) => h.ratio("headroom")?,
            None => earlywarn_core::ops::default_headroom(),
        },
    };
    model.validate().map_err(Error::invalid)?;
    Ok(CapacityPreset { model, published: f.published })
}

/// Text of a bundled preset, or of the file at `path`.
fn preset_text(kind: &str, bundled: &[(&str, &'static str)], name: Option<&str>, path: Option<&Path>) -> Result<String, Error> {
    match (name, path) {
        (_, Some(p)) => std::fs::read_to_string(p).map_err(|e| Error::new("io", format!("{}: {e}", p.display()))),
        (Some(n), None) => bundled
            .iter()
            .find(|(k, _)| *k == n)
            .map(|(_, t)| (*t).to_owned())
            .ok_or_else(|| Error::invalid(format!("unknown {kind} preset `{n}`"))),
        (None, None) => Err(Error::invalid(format!("give --preset or --config for {kind}"))),
    }
}

pub fn load_cost_preset(name: Option<&str>, path: Option<&Path>) -> Result<CostPreset, Error> {
    parse_cost_preset(&preset_text("costs", &[("paper", COSTS_PAPER)], name, path)?)
}

pub fn load_capacity_preset(name: Option<&str>, path: Option<&Path>) -> Result<CapacityPreset, Error> {
    parse_capacity_preset(&preset_text("capacity", &[("paper", CAPACITY_PAPER)], name, path)?)
}

/// One line of the cost table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostRow {
    pub item: &'static str,
    pub computed: String,
    pub published: Option<String>,
    /// `computed - published` per range end; `None` without a published value.
    pub gap: Option<String>,
}

fn span_gap(c: Span<Cents>, p: Span<Cents>) -> String {
    let signed = |d: i64| if d < 0 { Cents(d).to_string() } else { format!("+{}", Cents(d)) };
    format!("{} / {}", signed(c.low.0 - p.low.0), signed(c.high.0 - p.high.0))
}

fn ratio_text(r: Span<Option<i64>>) -> String {
    let f = |v: Option<i64>| v.map_or_else(|| "n/a".to_owned(), |x| format!("{x}x"));
    format!("{}–{}", f(r.low), f(r.high))
}

pub fn cost_rows(r: &CostReport, p: Option<&PublishedCosts>) -> Vec<CostRow> {
    let row = |item, c: Span<Cents>, pick: fn(&PublishedCosts) -> Span<Cents>| CostRow {
        item,
        computed: c.to_string(),
        published: p.map(|p| pick(p).to_string()),
        gap: p.map(|p| span_gap(c, pick(p))),
    };
    let plain = |item, computed: String| CostRow { item, computed, published: None, gap: None };
    vec![
        plain("GPU inference / month", r.gpu_monthly.to_string()),
        plain("CPU serving / month", r.cpu_monthly.to_string()),
        plain("Database / month", r.db_monthly.to_string()),
        row("Monthly total", r.monthly, |p| p.monthly),
        row("Annual", r.annual, |p| p.annual),
        row("Horizon total", r.horizon_total, |p| p.horizon_total),
        row("Radar horizon total", r.radar_total, |p| p.radar_total),
        CostRow {
            item: "Cost ratio",
            computed: ratio_text(r.ratio),
            published: p.map(|p| ratio_text(Span::new(Some(p.ratio.low), Some(p.ratio.high)))),
            gap: p.map(|p| {
                let d = |c: Option<i64>, q: i64| c.map_or_else(|| "n/a".to_owned(), |c| format!("{:+}", c - q));
                format!("{} / {}", d(r.ratio.low, p.ratio.low), d(r.ratio.high, p.ratio.high))
            }),
        },
    ]
}

/// Full cost document: computed report, published figures, and the chain
/// recomputed from the published monthly totals.
pub fn cost_document(preset: &CostPreset) -> Value {
    let r = compute_costs(&preset.model);
    let mut doc = json!({ "computed": r, "rows": cost_rows(&r, preset.published.as_ref()) });
    if let Some(p) = &preset.published {
        let (annual, horizon, ratio) = costs_from_monthly(p.monthly, preset.model.years, r.radar_total);
        doc["published"] = json!(p);
        doc["published_monthly_chain"] = json!({ "annual": annual, "horizon_total": horizon, "ratio": ratio });
        doc["matches_published"] = json!({
            "monthly": r.monthly == p.monthly,
            "annual": r.annual == p.annual,
            "horizon_total": r.horizon_total == p.horizon_total,
            "radar_total": r.radar_total == p.radar_total,
            "ratio": r.ratio == Span::new(Some(p.ratio.low), Some(p.ratio.high)),
        });
    }
    doc
}

/// Capacity document with the raw and headroom-adjusted instance counts.
pub fn capacity_document(preset: &CapacityPreset) -> (CapacityReport, Value) {
    let r = compute_capacity(&preset.model);
    let mut doc = json!({ "computed": r });
    if let Some(p) = &preset.published {
        let int = |q: &Q, v: i64| q.is_integer() && q.to_integer() == i128::from(v);
        doc["published"] = json!(p);
        doc["matches_published"] = json!({
            "addressable": int(&r.addressable, p.addressable),
            "active": int(&r.active, p.active),
            "peak_per_minute": int(&r.peak_per_minute, p.peak_per_minute),
            "peak_per_second": int(&r.peak_per_second, p.peak_per_second),
            "instances_raw": r.instances_raw == Span::new(p.instances[0].into(), p.instances[1].into()),
            "instances_with_headroom": r.instances_with_headroom == Span::new(p.instances[0].into(), p.instances[1].into()),
        });
        doc["headroom_note"] = json!(format!(
            "raw division gives {}–{} instances; headroom {} gives {}–{}",
            r.instances_raw.low,
            r.instances_raw.high,
            format_q(&r.headroom),
            r.instances_with_headroom.low,
            r.instances_with_headroom.high
        ));
    }
    (r, doc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_cost_preset_parses_exactly() {
        let p = load_cost_preset(Some("paper"), None).unwrap();
        assert_eq!(p.model.gpu_hourly, Cents(149));
        assert_eq!(p.model.radar_maintenance, Cents::dollars(150_000_000));
        let pubd = p.published.unwrap();
        assert_eq!(pubd.monthly, Span::new(Cents::dollars(1_430), Cents::dollars(1_730)));
        assert_eq!(pubd.ratio, Span::new(2_023, 4_545));
    }

    #[test]
    fn bundled_capacity_preset_parses_exactly() {
        let p = load_capacity_preset(Some("paper"), None).unwrap();
        assert_eq!(p.model.addressable_fraction, Q::new(7, 15));
        assert_eq!(p.model.headroom, Q::new(7, 4));
        let (r, doc) = capacity_document(&p);
        assert_eq!(r.peak_per_second, Q::from_integer(2_800));
        assert_eq!(doc["matches_published"]["instances_with_headroom"], true);
        assert_eq!(doc["matches_published"]["instances_raw"], false);
    }

    #[test]
    fn numbers_may_be_written_bare() {
        let text = COSTS_PAPER.replace("gpu_hourly = \"1.49\"", "gpu_hourly = 1.49");
        assert_eq!(parse_cost_preset(&text).unwrap().model.gpu_hourly, Cents(149));
    }

    #[test]
    fn bad_presets_are_invalid_arguments() {
        assert_eq!(load_cost_preset(Some("regional"), None).unwrap_err().kind, "invalid_argument");
        assert_eq!(load_cost_preset(None, None).unwrap_err().kind, "invalid_argument");
        let reversed = COSTS_PAPER.replace("cpu_instances = [5, 10]", "cpu_instances = [10, 5]");
        assert_eq!(parse_cost_preset(&reversed).unwrap_err().kind, "invalid_argument");
        let typo = format!("{COSTS_PAPER}\nextra = 1\n");
        assert!(parse_cost_preset(&typo.replace("[published]", "bogus = 2\n[published]")).is_err());
    }

    #[test]
    fn cost_document_reports_the_line_item_gap() {
        let doc = cost_document(&load_cost_preset(Some("paper"), None).unwrap());
        assert_eq!(doc["matches_published"]["radar_total"], true);
        assert_eq!(doc["matches_published"]["monthly"], false);
        assert_eq!(doc["published_monthly_chain"]["ratio"]["low"], 2_023);
        assert_eq!(doc["published_monthly_chain"]["ratio"]["high"], 4_545);
        assert_eq!(doc["published_monthly_chain"]["horizon_total"]["high"], 10_380_000);
    }
}
