//! Subscriber registry and per-subscriber alert candidates.

use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, FixedOffset, Utc};
use earlywarn_core::serve::{
    assess_flood_risk, geocode, get_point_forecast, render_summary, AlertCandidate, ForecastSeries, Gazetteer, Location,
    RenderContext, RiskAssessment, RiskConfig, ServeError, Subscriber, TemplateSet, TCWV, TP,
};
use earlywarn_core::store::StoreReader;

use crate::Error;

/// Subscribers keyed by id, optionally persisted as a JSON array.
pub struct SubscriberRegistry {
    path: Option<PathBuf>,
    entries: Mutex<Vec<Subscriber>>,
}

impl SubscriberRegistry {
    pub fn in_memory() -> Self {
        Self { path: None, entries: Mutex::new(Vec::new()) }
    }

    /// Load `path` if it exists; later upserts rewrite it atomically.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, Error> {
        let path = path.into();
        let entries = match fs::read(&path) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map_err(|e| Error::new("corrupt", format!("{}: {e}", path.display())))?,
            Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(e.into()),
        };
        Ok(Self { path: Some(path), entries: Mutex::new(entries) })
    }

    pub fn list(&self) -> Vec<Subscriber> {
        self.entries.lock().unwrap().clone()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Insert or replace by id. Returns true when an entry was replaced.
    pub fn upsert(&self, sub: Subscriber) -> Result<bool, Error> {
        let mut entries = self.entries.lock().unwrap();
        let mut next = entries.clone();
        let replaced = match next.iter_mut().find(|s| s.id == sub.id) {
            Some(slot) => {
                *slot = sub;
                true
            }
            None => {
                next.push(sub);
                false
            }
        };
        if let Some(path) = &self.path {
            write_atomic(path, &serde_json::to_vec_pretty(&next).expect("subscribers serialize"))?;
        }
        *entries = next;
        Ok(replaced)
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("json.tmp");
    let mut f = File::create(&tmp)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    fs::rename(&tmp, path)
}

/// Reject subscribers whose location, locale or id cannot be served.
pub fn validate_subscriber(sub: &Subscriber, gz: &Gazetteer, templates: &TemplateSet) -> Result<(), Error> {
    if sub.id.trim().is_empty() || sub.id.contains('|') {
        return Err(Error::invalid("subscriber id must be non-empty and must not contain `|`"));
    }
    match &sub.location {
        Location::Place { place } => {
            geocode(place, gz)?;
        }
        Location::Coords { lat, lon } => {
            if !(-90.0..=90.0).contains(lat) || !lon.is_finite() {
                return Err(Error::new("invalid_location", format!("({lat}, {lon}) is not a valid coordinate")));
            }
        }
    }
    if !templates.locales().contains(&sub.locale.as_str()) {
        return Err(Error::invalid(format!("unsupported locale `{}`", sub.locale)));
    }
    Ok(())
}

/// Everything needed to assess and word one location's risk.
pub struct AdvisoryContext<'a> {
    pub reader: &'a StoreReader,
    pub gazetteer: &'a Gazetteer,
    pub templates: &'a TemplateSet,
    pub risk: &'a RiskConfig,
    pub utc_offset: FixedOffset,
}

/// A point assessment with its rendered advisory.
#[derive(Debug, Clone, serde::Serialize)]
pub struct Advisory {
    pub series: ForecastSeries,
    pub assessment: RiskAssessment,
    pub summary: String,
    pub template_id: String,
}

impl AdvisoryContext<'_> {
    pub fn advise(
        &self,
        loc: &Location,
        locale: &str,
        run: Option<DateTime<Utc>>,
        now: DateTime<Utc>,
    ) -> Result<Advisory, ServeError> {
        let vars = [TCWV.to_owned(), TP.to_owned()];
        let series = get_point_forecast(self.reader, self.gazetteer, loc, &vars, run)?;
        let assessment = assess_flood_risk(&series, self.risk)?;
        let label = series.location.place.clone().unwrap_or_else(|| coord_label(series.location.lat, series.location.lon));
        let ctx = RenderContext::new(label, now, self.utc_offset);
        let summary = render_summary(&assessment, &series, self.templates, locale, &ctx)?;
        let template_id = self.templates.get(assessment.level, locale).map(|t| t.id.clone()).unwrap_or_default();
        Ok(Advisory { series, assessment, summary, template_id })
    }

    /// One candidate per subscriber against `run` (latest when `None`).
    pub fn candidates(
        &self,
        subscribers: &[Subscriber],
        run: Option<DateTime<Utc>>,
        now: DateTime<Utc>,
    ) -> Result<Vec<AlertCandidate>, ServeError> {
        let run_time = match run {
            Some(t) => self.reader.manifest(t)?.forecast_run_time,
            None => self.reader.latest_run()?.forecast_run_time,
        };
        subscribers
            .iter()
            .map(|s| {
                let a = self.advise(&s.location, &s.locale, Some(run_time), now)?;
                Ok(AlertCandidate {
                    subscriber: s.clone(),
                    run_time,
                    assessment: a.assessment,
                    text: a.summary,
                    template_id: a.template_id,
                })
            })
            .collect()
    }
}

/// `26.00°S 28.00°E` style label for unnamed grid nodes.
pub fn coord_label(lat: f64, lon: f64) -> String {
    let ns = if lat < 0.0 { 'S' } else { 'N' };
    let lon = earlywarn_core::grid::normalize_lon(lon);
    let (ew, lon) = if lon > 180.0 { ('W', 360.0 - lon) } else { ('E', lon) };
    format!("{:.2}°{ns} {lon:.2}°{ew}", lat.abs())
}
