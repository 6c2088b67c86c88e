//! JSON-over-HTTP front end.
//!
//! Handlers see the forecast store only through a [`StoreReader`], so no
//! request path can write a run or trigger inference. Each point-forecast
//! request records geocode, query and format timings for `/v1/metrics`.

use std::collections::{HashMap, VecDeque};
use std::io;
use std::net::{SocketAddr, TcpListener};
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use axum::extract::{Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, FixedOffset, Utc};
use earlywarn_core::cycle::parse_time;
use earlywarn_core::ops::Percentiles;
use earlywarn_core::serve::{
    default_offset, dispatch_alerts, get_point_forecast_timed, FileOutbox, Gazetteer, Location, RiskConfig, Subscriber,
    TemplateSet,
};
use earlywarn_core::store::StoreReader;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::oneshot;

use crate::alerts::{validate_subscriber, AdvisoryContext, SubscriberRegistry};
use crate::Error;

/// Variables returned by `/v1/forecast` when `vars` is absent.
pub const DEFAULT_VARS: [&str; 3] = ["t2m", "tp", "tcwv"];

/// Per-stage budgets in milliseconds.
pub const BUDGET_MS: StageBudget = StageBudget { geocode: 50.0, query: 100.0, format: 50.0, total: 200.0 };

const SAMPLE_CAP: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StageBudget {
    pub geocode: f64,
    pub query: f64,
    pub format: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct ApiConfig {
    pub bind: SocketAddr,
    pub outbox: PathBuf,
    /// Subscriber registry file; in memory when `None`.
    pub subscribers: Option<PathBuf>,
    pub risk: RiskConfig,
    pub utc_offset: FixedOffset,
    pub worker_threads: usize,
}

impl ApiConfig {
    pub fn new(bind: SocketAddr, outbox: impl Into<PathBuf>) -> Self {
        Self {
            bind,
            outbox: outbox.into(),
            subscribers: None,
            risk: RiskConfig::default(),
            utc_offset: default_offset(),
            worker_threads: std::thread::available_parallelism().map_or(2, |n| n.get().max(2)),
        }
    }
}

struct AppState {
    reader: StoreReader,
    gazetteer: Gazetteer,
    templates: TemplateSet,
    risk: RiskConfig,
    utc_offset: FixedOffset,
    outbox: FileOutbox,
    subscribers: SubscriberRegistry,
    metrics: Mutex<StageSamples>,
}

#[derive(Default)]
struct StageSamples {
    requests: u64,
    geocode: VecDeque<f64>,
    query: VecDeque<f64>,
    format: VecDeque<f64>,
    total: VecDeque<f64>,
}

impl StageSamples {
    fn record(&mut self, geocode: Duration, query: Duration, format: Duration, total: Duration) {
        self.requests += 1;
        for (q, d) in [(&mut self.geocode, geocode), (&mut self.query, query), (&mut self.format, format), (&mut self.total, total)] {
            if q.len() == SAMPLE_CAP {
                q.pop_front();
            }
            q.push_back(d.as_secs_f64() * 1e3);
        }
    }
}

/// Stage latency summary over the most recent requests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub requests: u64,
    pub samples: usize,
    pub geocode_ms: Percentiles,
    pub query_ms: Percentiles,
    pub format_ms: Percentiles,
    pub total_ms: Percentiles,
    pub within_budget: bool,
}

impl StageSamples {
    fn report(&self) -> StageReport {
        let p = |q: &VecDeque<f64>| Percentiles::from_samples(&q.iter().copied().collect::<Vec<_>>());
        let (g, q, f, t) = (p(&self.geocode), p(&self.query), p(&self.format), p(&self.total));
        StageReport {
            requests: self.requests,
            samples: self.total.len(),
            within_budget: g.p99 < BUDGET_MS.geocode
                && q.p99 < BUDGET_MS.query
                && f.p99 < BUDGET_MS.format
                && t.p99 < BUDGET_MS.total,
            geocode_ms: g,
            query_ms: q,
            format_ms: f,
            total_ms: t,
        }
    }
}

/// HTTP status for an error kind.
pub fn status_for(kind: &str) -> StatusCode {
    match kind {
        "geocode_miss" | "no_such_run" | "no_runs" | "not_found" => StatusCode::NOT_FOUND,
        "invalid_location" | "unknown_variable" | "invalid_argument" | "missing_signal" => StatusCode::BAD_REQUEST,
        "conflict" => StatusCode::CONFLICT,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

struct ApiError(Error);

impl<E: Into<Error>> From<E> for ApiError {
    fn from(e: E) -> Self {
        ApiError(e.into())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "error": { "kind": self.0.kind, "message": self.0.message } });
        (status_for(&self.0.kind), Json(body)).into_response()
    }
}

type Params = Query<HashMap<String, String>>;

fn location_param(q: &HashMap<String, String>) -> Result<Location, Error> {
    let coord = |name: &str| -> Result<Option<f64>, Error> {
        q.get(name)
            .map(|s| s.trim().parse::<f64>().map_err(|_| Error::new("invalid_location", format!("{name}=`{s}` is not a number"))))
            .transpose()
    };
    match (q.get("place"), coord("lat")?, coord("lon")?) {
        (Some(p), None, None) if !p.trim().is_empty() => Ok(Location::place(p.trim())),
        (None, Some(lat), Some(lon)) => Ok(Location::coords(lat, lon)),
        _ => Err(Error::new("invalid_location", "give either place= or both lat= and lon=")),
    }
}

fn vars_param(q: &HashMap<String, String>) -> Vec<String> {
    match q.get("vars") {
        None => DEFAULT_VARS.iter().map(|v| (*v).to_owned()).collect(),
        Some(s) => s.split(',').map(str::trim).filter(|v| !v.is_empty()).map(str::to_owned).collect(),
    }
}

fn run_param(q: &HashMap<String, String>) -> Result<Option<DateTime<Utc>>, Error> {
    q.get("run")
        .map(|s| parse_time(s).ok_or_else(|| Error::invalid(format!("run=`{s}` is not an ISO-8601 time"))))
        .transpose()
}

async fn forecast(State(s): State<Arc<AppState>>, Query(q): Params) -> Result<Response, ApiError> {
    let started = Instant::now();
    let loc = location_param(&q)?;
    let run = run_param(&q)?;
    let (series, t) = get_point_forecast_timed(&s.reader, &s.gazetteer, &loc, &vars_param(&q), run)?;
    let encode = Instant::now();
    let body = serde_json::to_vec(&series).map_err(|e| Error::new("internal", e.to_string()))?;
    let format = t.format + encode.elapsed();
    s.metrics.lock().unwrap().record(t.geocode, t.query, format, started.elapsed());
    Ok(([(header::CONTENT_TYPE, "application/json")], body).into_response())
}

async fn risk(State(s): State<Arc<AppState>>, Query(q): Params) -> Result<Response, ApiError> {
    let loc = location_param(&q)?;
    let run = run_param(&q)?;
    let locale = q.get("locale").map_or("en", String::as_str);
    if !s.templates.locales().contains(&locale) {
        return Err(Error::invalid(format!("unsupported locale `{locale}`")).into());
    }
    let a = advisory(&s).advise(&loc, locale, run, Utc::now())?;
    Ok(Json(json!({
        "location": a.series.location,
        "run_time": a.series.run_time,
        "lead_hours": a.series.lead_hours,
        "level": a.assessment.level,
        "signals": a.assessment.signals,
        "window": a.assessment.window,
        "summary": a.summary,
        "template_id": a.template_id,
    }))
    .into_response())
}

async fn latest(State(s): State<Arc<AppState>>) -> Result<Response, ApiError> {
    let m = s.reader.latest_run()?;
    Ok(Json(m).into_response())
}

async fn subscribe(State(s): State<Arc<AppState>>, body: Result<Json<Subscriber>, axum::extract::rejection::JsonRejection>) -> Result<Response, ApiError> {
    let Json(sub) = body.map_err(|e| Error::invalid(e.body_text()))?;
    validate_subscriber(&sub, &s.gazetteer, &s.templates)?;
    let id = sub.id.clone();
    let replaced = s.subscribers.upsert(sub)?;
    let status = if replaced { StatusCode::OK } else { StatusCode::CREATED };
    Ok((status, Json(json!({ "id": id, "replaced": replaced, "subscribers": s.subscribers.len() }))).into_response())
}

#[derive(Debug, Default, Deserialize)]
struct DispatchBody {
    run: Option<String>,
}

async fn dispatch(State(s): State<Arc<AppState>>, body: Option<Json<DispatchBody>>) -> Result<Response, ApiError> {
    let run = match body.and_then(|Json(b)| b.run) {
        Some(r) => Some(parse_time(&r).ok_or_else(|| Error::invalid(format!("run `{r}` is not an ISO-8601 time")))?),
        None => None,
    };
    let now = Utc::now();
    let candidates = advisory(&s).candidates(&s.subscribers.list(), run, now)?;
    let state = s.clone();
    let outcome = tokio::task::spawn_blocking(move || dispatch_alerts(&candidates, &state.outbox, now))
        .await
        .map_err(|e| Error::new("internal", e.to_string()))?;
    Ok(match outcome {
        Ok((report, _)) => Json(report).into_response(),
        Err(partial) => {
            let message = partial.error.clone().unwrap_or_default();
            let body = json!({ "error": { "kind": "outbox_write", "message": message }, "report": partial });
            (StatusCode::INTERNAL_SERVER_ERROR, Json(body)).into_response()
        }
    })
}

async fn metrics(State(s): State<Arc<AppState>>) -> Response {
    let report = s.metrics.lock().unwrap().report();
    Json(json!({ "stages": report, "budget_ms": BUDGET_MS })).into_response()
}

async fn not_found() -> ApiError {
    ApiError(Error::new("not_found", "no such endpoint"))
}

fn advisory(s: &AppState) -> AdvisoryContext<'_> {
    AdvisoryContext { reader: &s.reader, gazetteer: &s.gazetteer, templates: &s.templates, risk: &s.risk, utc_offset: s.utc_offset }
}

fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/forecast", get(forecast))
        .route("/v1/risk", get(risk))
        .route("/v1/runs/latest", get(latest))
        .route("/v1/subscribers", post(subscribe))
        .route("/v1/dispatch", post(dispatch))
        .route("/v1/metrics", get(metrics))
        .fallback(not_found)
        .with_state(state)
}

/// A running server. Dropping it shuts the server down.
pub struct ServiceHandle {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<io::Result<()>>>,
}

impl ServiceHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Stop accepting connections, drain in-flight requests and join.
    pub fn shutdown(mut self) -> io::Result<()> {
        self.stop()
    }

    /// Block until the process receives Ctrl-C, then shut down.
    pub fn run_until_ctrl_c(self) -> io::Result<()> {
        tokio::runtime::Builder::new_current_thread().enable_all().build()?.block_on(tokio::signal::ctrl_c())?;
        self.shutdown()
    }

    fn stop(&mut self) -> io::Result<()> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        match self.thread.take() {
            Some(t) => t.join().map_err(|_| io::Error::other("server thread panicked"))?,
            None => Ok(()),
        }
    }
}

impl Drop for ServiceHandle {
    fn drop(&mut self) {
        let _ = self.stop();
    }
}

/// Bind `config.bind` and serve on a dedicated runtime thread.
pub fn serve_api(reader: StoreReader, config: ApiConfig) -> Result<ServiceHandle, Error> {
    let listener = TcpListener::bind(config.bind)
        .map_err(|e| Error::new("bind_failed", format!("cannot bind {}: {e}", config.bind)))?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;
    let subscribers = match &config.subscribers {
        Some(p) => SubscriberRegistry::open(p)?,
        None => SubscriberRegistry::in_memory(),
    };
    let state = Arc::new(AppState {
        reader,
        gazetteer: Gazetteer::bundled(),
        templates: TemplateSet::bundled(),
        risk: config.risk,
        utc_offset: config.utc_offset,
        outbox: FileOutbox::open(&config.outbox)?,
        subscribers,
        metrics: Mutex::new(StageSamples::default()),
    });
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(config.worker_threads.max(1))
        .thread_name("earlywarn-api")
        .enable_all()
        .build()?;
    let (tx, rx) = oneshot::channel::<()>();
    let thread = std::thread::Builder::new().name("earlywarn-serve".into()).spawn(move || {
        runtime.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(listener)?;
            axum::serve(listener, router(state))
                .with_graceful_shutdown(async move {
                    let _ = rx.await;
                })
                .await
        })
    })?;
    Ok(ServiceHandle { addr, shutdown: Some(tx), thread: Some(thread) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(pairs: &[(&str, &str)]) -> HashMap<String, String> {
        pairs.iter().map(|(k, v)| ((*k).to_owned(), (*v).to_owned())).collect()
    }

    #[test]
    fn location_parameters() {
        assert_eq!(location_param(&params(&[("place", "Durban")])).unwrap(), Location::place("Durban"));
        assert_eq!(location_param(&params(&[("lat", "-26"), ("lon", "28")])).unwrap(), Location::coords(-26.0, 28.0));
        for bad in [&[][..], &[("lat", "1")][..], &[("place", "Durban"), ("lat", "1"), ("lon", "2")][..], &[("lat", "x"), ("lon", "1")][..]] {
            assert_eq!(location_param(&params(bad)).unwrap_err().kind, "invalid_location");
        }
    }

    #[test]
    fn variable_parameters() {
        assert_eq!(vars_param(&params(&[])), DEFAULT_VARS);
        assert!(vars_param(&params(&[("vars", "")])).is_empty());
        assert_eq!(vars_param(&params(&[("vars", "tp, tcwv")])), ["tp", "tcwv"]);
    }

    #[test]
    fn statuses() {
        assert_eq!(status_for("geocode_miss"), StatusCode::NOT_FOUND);
        assert_eq!(status_for("unknown_variable"), StatusCode::BAD_REQUEST);
        assert_eq!(status_for("io"), StatusCode::INTERNAL_SERVER_ERROR);
    }

    #[test]
    fn samples_are_bounded() {
        let mut s = StageSamples::default();
        for k in 0..SAMPLE_CAP + 10 {
            let d = Duration::from_micros((k % 1000) as u64);
            s.record(d, d, d, d);
        }
        let r = s.report();
        assert_eq!((r.requests, r.samples), ((SAMPLE_CAP + 10) as u64, SAMPLE_CAP));
        assert!(r.within_budget);
    }
}
