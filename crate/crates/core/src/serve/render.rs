//! Deterministic advisory text from fixed templates.
//!
//! Placeholders: `{place}`, `{window}`, `{peak_tcwv}`, `{peak_tp}`,
//! `{recommendation}`, `{age}`.

use std::collections::HashMap;

use chrono::{DateTime, Datelike, Duration, FixedOffset, Utc, Weekday};

use super::risk::{peak_accumulation, RiskAssessment, RiskConfig, RiskLevel, TCWV};
use super::{ForecastSeries, ServeError};

/// Words a normal-level template may not contain.
pub const WARNING_WORDS: [&str; 12] = [
    "warning", "flood", "avoid", "evacuate", "prepare", "risk", "waarskuwing", "vloed", "vermy", "ontruim", "berei", "gevaar",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    pub id: String,
    pub body: String,
    pub recommendation: String,
}

/// Templates keyed by (level, locale). Immutable once built.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    templates: HashMap<(RiskLevel, String), Template>,
}

#[derive(Debug, Clone)]
pub struct RenderContext {
    pub place_label: String,
    pub as_of: DateTime<Utc>,
    pub utc_offset: FixedOffset,
}

impl RenderContext {
    pub fn new(place_label: impl Into<String>, as_of: DateTime<Utc>, utc_offset: FixedOffset) -> Self {
        Self { place_label: place_label.into(), as_of, utc_offset }
    }
}

/// South Africa Standard Time.
pub fn default_offset() -> FixedOffset {
    FixedOffset::east_opt(2 * 3600).unwrap()
}

impl TemplateSet {
    pub fn new(templates: impl IntoIterator<Item = (RiskLevel, String, Template)>) -> Result<Self, String> {
        let mut map = HashMap::new();
        for (level, locale, t) in templates {
            if t.body.trim().is_empty() {
                return Err(format!("template {} is empty", t.id));
            }
            if level == RiskLevel::Normal {
                let text = format!("{} {}", t.body, t.recommendation).to_lowercase();
                if let Some(w) = WARNING_WORDS.iter().find(|w| text.contains(*w)) {
                    return Err(format!("normal template {} contains warning word `{w}`", t.id));
                }
            }
            map.insert((level, locale), t);
        }
        Ok(Self { templates: map })
    }

    pub fn bundled() -> Self {
        let t = |level: RiskLevel, locale: &str, body: &str, recommendation: &str| {
            (
                level,
                locale.to_owned(),
                Template { id: format!("{level}.{locale}"), body: body.into(), recommendation: recommendation.into() },
            )
        };
        Self::new([
            t(
                RiskLevel::Normal,
                "en",
                "{place}: no significant weather expected over the next 15 days. Peak water vapour {peak_tcwv} mm, \
                 heaviest 24 h rainfall {peak_tp} mm. {recommendation} Based on the forecast updated {age}.",
                "Normal activities can continue.",
            ),
            t(
                RiskLevel::Elevated,
                "en",
                "{place}: elevated flood risk {window}. Water vapour peaks at {peak_tcwv} mm with up to {peak_tp} mm \
                 of rain in 24 h. {recommendation} Based on the forecast updated {age}.",
                "Prepare now: secure belongings, plan a route to higher ground and watch for updates.",
            ),
            t(
                RiskLevel::Severe,
                "en",
                "{place}: SEVERE flood warning {window}. Up to {peak_tp} mm of rain in 24 h with water vapour at \
                 {peak_tcwv} mm. {recommendation} Based on the forecast updated {age}.",
                "Avoid travel and low-lying areas; be ready to evacuate if told to.",
            ),
            t(
                RiskLevel::Normal,
                "af",
                "{place}: geen noemenswaardige weer oor die volgende 15 dae nie. Hoogste waterdamp {peak_tcwv} mm, \
                 swaarste reën in 24 h {peak_tp} mm. {recommendation} Volgens die voorspelling van {age}.",
                "Gewone bedrywighede kan voortgaan.",
            ),
            t(
                RiskLevel::Elevated,
                "af",
                "{place}: verhoogde vloedgevaar {window}. Waterdamp bereik {peak_tcwv} mm met tot {peak_tp} mm reën \
                 in 24 h. {recommendation} Volgens die voorspelling van {age}.",
                "Berei nou voor: beveilig besittings, beplan 'n roete na hoër grond en volg opdaterings.",
            ),
            t(
                RiskLevel::Severe,
                "af",
                "{place}: ERNSTIGE vloedwaarskuwing {window}. Tot {peak_tp} mm reën in 24 h met waterdamp by \
                 {peak_tcwv} mm. {recommendation} Volgens die voorspelling van {age}.",
                "Vermy reis en laagliggende gebiede; wees gereed om te ontruim indien opdrag gegee word.",
            ),
        ])
        .expect("bundled templates are valid")
    }

    pub fn get(&self, level: RiskLevel, locale: &str) -> Option<&Template> {
        self.templates.get(&(level, locale.to_owned()))
    }

    pub fn locales(&self) -> Vec<&str> {
        let mut l: Vec<&str> = self.templates.keys().map(|(_, loc)| loc.as_str()).collect();
        l.sort_unstable();
        l.dedup();
        l
    }
}

fn weekday_name(day: Weekday, locale: &str) -> &'static str {
    let i = day.num_days_from_monday() as usize;
    match locale {
        "af" => ["Maandag", "Dinsdag", "Woensdag", "Donderdag", "Vrydag", "Saterdag", "Sondag"][i],
        _ => ["Monday", "Tuesday", "Wednesday", "Thursday", "Friday", "Saturday", "Sunday"][i],
    }
}

/// Window as local weekday names, e.g. "Tuesday through Thursday".
pub fn window_phrase(run_time: DateTime<Utc>, window: (u32, u32), offset: FixedOffset, locale: &str) -> String {
    let local = |h: u32| (run_time + Duration::hours(i64::from(h))).with_timezone(&offset);
    let (a, b) = (local(window.0), local(window.1));
    let (first, last) = (weekday_name(a.weekday(), locale), weekday_name(b.weekday(), locale));
    let same_day = a.date_naive() == b.date_naive();
    let week_or_more = (b.date_naive() - a.date_naive()).num_days() >= 7;
    match (locale, same_day, week_or_more) {
        ("af", true, _) => format!("op {first}"),
        ("af", false, false) => format!("van {first} tot {last}"),
        ("af", false, true) => format!("van {first} {} tot {last} {}", a.day(), b.day()),
        (_, true, _) => format!("on {first}"),
        (_, false, false) => format!("{first} through {last}"),
        (_, false, true) => format!("from {first} {} through {last} {}", a.day(), b.day()),
    }
}

fn age_phrase(run_time: DateTime<Utc>, as_of: DateTime<Utc>, locale: &str) -> String {
    let hours = (as_of - run_time).num_hours().max(0);
    match (locale, hours) {
        ("af", 0) => "minder as 'n uur gelede".into(),
        ("af", 1) => "ongeveer 1 uur gelede".into(),
        ("af", h) => format!("ongeveer {h} uur gelede"),
        (_, 0) => "less than an hour ago".into(),
        (_, 1) => "about 1 hour ago".into(),
        (_, h) => format!("about {h} hours ago"),
    }
}

pub fn render_summary(
    assessment: &RiskAssessment,
    series: &ForecastSeries,
    templates: &TemplateSet,
    locale: &str,
    ctx: &RenderContext,
) -> Result<String, ServeError> {
    let t = templates
        .get(assessment.level, locale)
        .ok_or_else(|| ServeError::TemplateMiss { level: assessment.level.as_str().into(), locale: locale.into() })?;
    let peak_tcwv = series.values(TCWV).and_then(|v| v.iter().copied().reduce(f32::max)).map(f64::from);
    let peak_tp = peak_accumulation(series, &RiskConfig::default());
    let fmt = |v: Option<f64>| v.map_or_else(|| "n/a".to_owned(), |x| format!("{x:.1}"));
    let window = assessment
        .window
        .map(|w| window_phrase(series.run_time, w, ctx.utc_offset, locale))
        .unwrap_or_default();
    Ok(t
        .body
        .replace("{place}", &ctx.place_label)
        .replace("{window}", &window)
        .replace("{peak_tcwv}", &fmt(peak_tcwv))
        .replace("{peak_tp}", &fmt(peak_tp))
        .replace("{recommendation}", &t.recommendation)
        .replace("{age}", &age_phrase(series.run_time, ctx.as_of, locale)))
}
