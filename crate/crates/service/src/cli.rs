//! `earlywarn` command line.
//!
//! Every subcommand exits 0 on success. On failure it prints one JSON line
//! `{"error":{"kind":...,"message":...}}` to stderr and exits 1.

use std::fmt::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use chrono::{DateTime, FixedOffset, Utc};
use clap::{Args, Parser, Subcommand};
use earlywarn_core::cycle::{align_cycle, iso8601, parse_time};
use earlywarn_core::grid::build_catalog;
use earlywarn_core::inference::ToyModelConfig;
use earlywarn_core::ingest::{assemble_initial_tensor, worker_main, WorkerLauncher, DEFAULT_TIMEOUT};
use earlywarn_core::ops::{compute_costs, format_q, parse_ratio, Cents};
use earlywarn_core::serve::{
    default_offset, dispatch_alerts, get_point_forecast, FileOutbox, Gazetteer, Location, RiskConfig, RiskLevel,
    Subscriber, TemplateSet,
};
use earlywarn_core::store::ForecastStore;
use serde_json::json;

use crate::alerts::{coord_label, validate_subscriber, AdvisoryContext, SubscriberRegistry};
use crate::api::{serve_api, ApiConfig, DEFAULT_VARS};
use crate::loadgen::{default_mix, run_loadgen, LoadgenConfig};
use crate::pipeline::{self, ForecastOptions, InitialSource};
use crate::presets::{capacity_document, cost_document, cost_rows, load_capacity_preset, load_cost_preset};
use crate::Error;

#[derive(Debug, Parser)]
#[command(name = "earlywarn", version, about = "Global forecast store and regional early-warning service")]
pub struct Cli {
    /// Data directory holding the store, fixtures, subscribers and outbox.
    #[arg(long, global = true, env = "EARLYWARN_DATA", default_value = "earlywarn-data")]
    pub data: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fetch initial conditions from the fixture store through an isolated worker.
    Ingest(IngestArgs),
    /// Run the autoregressive forecast and store it as a run.
    Forecast(ForecastArgs),
    /// Serve the HTTP API over committed runs.
    Serve(ServeArgs),
    /// One-shot point forecast and risk verdict.
    Query(QueryArgs),
    /// Register or update an alert subscriber.
    Subscribe(SubscribeArgs),
    /// Assess every subscriber and append due alerts to the outbox.
    Dispatch(DispatchArgs),
    /// Deployment cost model.
    Costs(CostsArgs),
    /// Serving capacity model.
    Capacity(CapacityArgs),
    /// Open-loop load test against a running API.
    Loadgen(LoadgenArgs),
    /// Keep only the newest runs.
    Retention(RetentionArgs),
    /// List stored runs.
    Runs,
    /// Print the variable catalog.
    Catalog,
    /// Fetch-worker protocol on stdin/stdout.
    #[command(hide = true)]
    Worker,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Cycle time (00/06/12/18Z); defaults to the latest cycle.
    #[arg(long)]
    pub cycle: Option<String>,
    /// Comma-separated variables; all 75 when omitted.
    #[arg(long, value_delimiter = ',')]
    pub vars: Vec<String>,
    /// Seed the fixture store with synthetic objects at this resolution first.
    #[arg(long)]
    pub seed_fixture: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker timeout in seconds.
    #[arg(long, default_value_t = DEFAULT_TIMEOUT.as_secs_f64())]
    pub timeout: f64,
}

#[derive(Debug, Args)]
pub struct ForecastArgs {
    /// Grid resolution in degrees.
    #[arg(long, default_value_t = 1.0)]
    pub res: f64,
    #[arg(long, default_value_t = 60)]
    pub steps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Cycle time; defaults to the latest cycle.
    #[arg(long)]
    pub cycle: Option<String>,
    /// Eastward shift per step in grid cells.
    #[arg(long, default_value_t = 1, allow_negative_numbers = true)]
    pub shift: i64,
    /// Zonal smoothing weight in [0, 1).
    #[arg(long, default_value_t = 0.0)]
    pub smoothing: f64,
    /// Take the initial state from the fixture store instead of the seed.
    #[arg(long)]
    pub from_fixture: bool,
    /// Replace an existing run for the same cycle.
    #[arg(long)]
    pub overwrite: bool,
    /// Print the stacked value count without running.
    #[arg(long)]
    pub dry_run: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: SocketAddr,
    /// Offset used for weekday names, e.g. +02:00.
    #[arg(long, default_value = "+02:00")]
    pub utc_offset: String,
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct LocationArgs {
    #[arg(long, conflicts_with_all = ["lat", "lon"])]
    pub place: Option<String>,
    #[arg(long, requires = "lon", allow_negative_numbers = true)]
    pub lat: Option<f64>,
    #[arg(long, requires = "lat", allow_negative_numbers = true)]
    pub lon: Option<f64>,
}

impl LocationArgs {
    fn location(&self) -> Result<Location, Error> {
        match (&self.place, self.lat, self.lon) {
            (Some(p), _, _) => Ok(Location::place(p.clone())),
            (None, Some(lat), Some(lon)) => Ok(Location::coords(lat, lon)),
            _ => Err(Error::new("invalid_location", "give --place or both --lat and --lon")),
        }
    }
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    #[command(flatten)]
    pub loc: LocationArgs,
    /// Comma-separated variables to print.
    #[arg(long, value_delimiter = ',')]
    pub vars: Option<Vec<String>>,
    #[arg(long)]
    pub run: Option<String>,
    #[arg(long, default_value = "en")]
    pub locale: String,
    /// Emit JSON instead of a table.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct SubscribeArgs {
    #[arg(long)]
    pub id: String,
    #[command(flatten)]
    pub loc: LocationArgs,
    /// normal, elevated or severe.
    #[arg(long, default_value = "elevated")]
    pub min_severity: String,
    #[arg(long, default_value = "en")]
    pub locale: String,
    /// Record the subscriber as opted out.
    #[arg(long)]
    pub opted_out: bool,
}

#[derive(Debug, Args)]
pub struct DispatchArgs {
    #[arg(long)]
    pub run: Option<String>,
}

#[derive(Debug, Args)]
pub struct PresetArgs {
    /// Bundled preset name.
    #[arg(long, conflicts_with = "config")]
    pub preset: Option<String>,
    /// TOML file with the model inputs.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Also write the structured report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CostsArgs {
    #[command(flatten)]
    pub preset: PresetArgs,
}

#[derive(Debug, Args)]
pub struct CapacityArgs {
    #[command(flatten)]
    pub preset: PresetArgs,
    /// Override the headroom factor, e.g. 1.8 or 7/4.
    #[arg(long)]
    pub headroom: Option<String>,
}

#[derive(Debug, Args)]
pub struct LoadgenArgs {
    /// Base URL of the API.
    #[arg(long, default_value = "http://127.0.0.1:8080")]
    pub target: String,
    #[arg(long, default_value_t = 200.0)]
    pub rps: f64,
    /// Seconds.
    #[arg(long, default_value_t = 30.0)]
    pub duration: f64,
    #[arg(long, default_value_t = 100)]
    pub max_in_flight: usize,
    /// Path templates; see the README for placeholders.
    #[arg(long)]
    pub mix: Vec<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RetentionArgs {
    #[arg(long)]
    pub keep: usize,
}

struct Paths {
    store: PathBuf,
    fixture: PathBuf,
    outbox: PathBuf,
    subscribers: PathBuf,
}

impl Paths {
    fn new(data: &Path) -> Self {
        Self {
            store: data.join("store"),
            fixture: data.join("fixture"),
            outbox: data.join("outbox.ndjson"),
            subscribers: data.join("subscribers.json"),
        }
    }
}

fn cycle_arg(s: &Option<String>) -> Result<DateTime<Utc>, Error> {
    match s {
        Some(t) => parse_time(t).ok_or_else(|| Error::invalid(format!("`{t}` is not an ISO-8601 time"))),
        None => Ok(align_cycle(Utc::now())),
    }
}

fn run_arg(s: &Option<String>) -> Result<Option<DateTime<Utc>>, Error> {
    s.as_ref().map(|t| cycle_arg(&Some(t.clone()))).transpose()
}

fn duration_arg(secs: f64, name: &str) -> Result<Duration, Error> {
    Duration::try_from_secs_f64(secs).map_err(|_| Error::invalid(format!("{name} must be a non-negative number of seconds")))
}

fn offset_arg(s: &str) -> Result<FixedOffset, Error> {
    s.parse::<FixedOffset>()
        .or_else(|_| format!("{s}:00").parse())
        .map_err(|_| Error::invalid(format!("`{s}` is not a UTC offset like +02:00")))
}

/// Relaunch this executable as the fetch worker.
fn self_worker() -> Result<WorkerLauncher, Error> {
    Ok(WorkerLauncher::Process { program: std::env::current_exe()?, args: vec!["worker".into()] })
}

fn write_out(path: &Option<PathBuf>, doc: &serde_json::Value) -> Result<(), Error> {
    if let Some(p) = path {
        std::fs::write(p, serde_json::to_vec_pretty(doc).expect("json"))
            .map_err(|e| Error::new("io", format!("{}: {e}", p.display())))?;
    }
    Ok(())
}

/// `4749948000` as `4,749,948,000`.
pub fn grouped(n: u64) -> String {
    let digits = n.to_string();
    let mut out = String::with_capacity(digits.len() + digits.len() / 3);
    for (k, c) in digits.chars().enumerate() {
        if k > 0 && (digits.len() - k).is_multiple_of(3) {
            out.push(',');
        }
        out.push(c);
    }
    out
}

fn table(rows: &[Vec<String>]) -> String {
    let width = rows.iter().map(Vec::len).max().unwrap_or(0);
    let cols: Vec<usize> = (0..width)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for r in rows {
        let line: Vec<String> = r.iter().enumerate().map(|(c, s)| format!("{s:<w$}", w = cols[c])).collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
    }
    out
}

/// Run one parsed command, returning what it prints to stdout.
pub fn execute(cli: Cli) -> Result<String, Error> {
    let paths = Paths::new(&cli.data);
    match cli.command {
        Command::Worker => {
            worker_main()?;
            Ok(String::new())
        }
        Command::Catalog => Ok(build_catalog().to_table()),
        Command::Ingest(a) => ingest(&paths, a),
        Command::Forecast(a) => forecast(&paths, a),
        Command::Serve(a) => serve(&paths, a),
        Command::Query(a) => query(&paths, a),
        Command::Subscribe(a) => subscribe(&paths, a),
        Command::Dispatch(a) => dispatch(&paths, a),
        Command::Costs(a) => costs(a),
        Command::Capacity(a) => capacity(a),
        Command::Loadgen(a) => loadgen(a),
        Command::Retention(a) => {
            let removed = ForecastStore::open(&paths.store)?.apply_retention(a.keep)?;
            let mut out = format!("kept {} newest runs, removed {}\n", a.keep, removed.len());
            for t in removed {
                let _ = writeln!(out, "  {}", iso8601(t));
            }
            Ok(out)
        }
        Command::Runs => {
            let store = ForecastStore::open(&paths.store)?;
            let mut rows = vec![vec!["run".into(), "grid".into(), "steps".into(), "rows".into()]];
            for t in store.runs() {
                let m = store.manifest(t)?;
                rows.push(vec![
                    iso8601(t),
                    format!("{}°", m.grid.resolution_deg),
                    m.timestep_count.to_string(),
                    m.row_count.to_string(),
                ]);
            }
            Ok(table(&rows))
        }
    }
}

fn ingest(paths: &Paths, a: IngestArgs) -> Result<String, Error> {
    let cycle = cycle_arg(&a.cycle)?;
    if let Some(res) = a.seed_fixture {
        pipeline::seed_fixture(&paths.fixture, res, cycle, a.seed)?;
    }
    let timeout = duration_arg(a.timeout, "--timeout")?;
    let res = pipeline::ingest(&paths.fixture, cycle, &a.vars, self_worker()?, timeout)?;
    let mut out = format!(
        "fetched cycle {} from {}: shape {:?} ({})\n",
        iso8601(cycle),
        paths.fixture.display(),
        res.shape,
        res.dims.join(", ")
    );
    let catalog = build_catalog();
    if res.coords.variable.len() == catalog.len() {
        let n = res.coords.lat.len();
        let res_deg = if n > 1 { 180.0 / (n - 1) as f64 } else { 0.0 };
        let grid = earlywarn_core::grid::grid_spec(res_deg)?;
        let t = assemble_initial_tensor(&res, &catalog, &grid)?;
        let _ = writeln!(out, "assembled initial tensor {:?}, lead hours {:?}", t.shape(), t.coords().lead_time());
    }
    Ok(out)
}

fn forecast(paths: &Paths, a: ForecastArgs) -> Result<String, Error> {
    if a.dry_run {
        let n = pipeline::dry_run_value_count(a.res, a.steps)?;
        return Ok(format!(
            "{} states at {}°: stacked tensor holds {} values ({} bytes as f32)\n",
            a.steps + 1,
            a.res,
            grouped(n),
            grouped(n * 4)
        ));
    }
    let cycle = cycle_arg(&a.cycle)?;
    let source = if a.from_fixture {
        InitialSource::Fixture { root: paths.fixture.clone(), launcher: self_worker()?, timeout: DEFAULT_TIMEOUT }
    } else {
        InitialSource::Synthetic
    };
    let opts = ForecastOptions {
        resolution_deg: a.res,
        steps: a.steps,
        cycle,
        model: ToyModelConfig { zonal_shift_cells: a.shift, smoothing_weight: a.smoothing, seed: a.seed },
        source,
        overwrite: a.overwrite,
    };
    let store = ForecastStore::open(&paths.store)?;
    let o = pipeline::forecast_and_store(&store, &opts)?;
    let leads = &o.manifest.lead_hours;
    Ok(format!(
        "stored run {}: {} states, lead hours {}..{} step 6, {} values, {} rows\ninference {:.2} s, insert {:.2} s\n",
        iso8601(o.manifest.forecast_run_time),
        o.states,
        leads.first().copied().unwrap_or(0),
        leads.last().copied().unwrap_or(0),
        grouped(o.value_count),
        grouped(o.manifest.row_count as u64),
        o.inference_s,
        o.insert_s
    ))
}

fn serve(paths: &Paths, a: ServeArgs) -> Result<String, Error> {
    let store = ForecastStore::open(&paths.store)?;
    let mut cfg = ApiConfig::new(a.bind, &paths.outbox);
    cfg.subscribers = Some(paths.subscribers.clone());
    cfg.utc_offset = offset_arg(&a.utc_offset)?;
    if let Some(w) = a.workers {
        cfg.worker_threads = w;
    }
    let handle = serve_api(store.reader(), cfg)?;
    eprintln!("serving {} runs on {}", store.runs().len(), handle.url());
    handle.run_until_ctrl_c()?;
    Ok("shut down\n".into())
}

fn query(paths: &Paths, a: QueryArgs) -> Result<String, Error> {
    let store = ForecastStore::open(&paths.store)?;
    let reader = store.reader();
    let gz = Gazetteer::bundled();
    let templates = TemplateSet::bundled();
    let loc = a.loc.location()?;
    let run = run_arg(&a.run)?;
    let vars = a.vars.unwrap_or_else(|| DEFAULT_VARS.iter().map(|v| (*v).to_owned()).collect());
    let series = get_point_forecast(&reader, &gz, &loc, &vars, run)?;
    let risk = RiskConfig::default();
    let ctx = AdvisoryContext { reader: &reader, gazetteer: &gz, templates: &templates, risk: &risk, utc_offset: default_offset() };
    let adv = ctx.advise(&loc, &a.locale, Some(series.run_time), Utc::now())?;
    if a.json {
        return Ok(format!("{}\n", json!({ "series": series, "risk": adv.assessment, "summary": adv.summary })));
    }
    let l = &series.location;
    let mut out = format!(
        "{} -> grid node ({}, {}) run {}\n",
        l.place.clone().unwrap_or_else(|| coord_label(l.lat, l.lon)),
        l.lat,
        l.lon,
        iso8601(series.run_time)
    );
    let mut rows = vec![std::iter::once("lead_h".to_owned()).chain(series.series.iter().map(|s| s.variable.clone())).collect::<Vec<_>>()];
    for (k, h) in series.lead_hours.iter().enumerate() {
        rows.push(std::iter::once(h.to_string()).chain(series.series.iter().map(|s| format!("{:.2}", s.values[k]))).collect());
    }
    out.push_str(&table(&rows));
    let _ = writeln!(out, "\nrisk: {}", adv.assessment.level);
    for s in &adv.assessment.signals {
        let _ = writeln!(out, "  {} = {:.1} > {} over lead hours {}..{}", s.name, s.value, s.threshold, s.window.0, s.window.1);
    }
    let _ = writeln!(out, "{}", adv.summary);
    Ok(out)
}

fn subscribe(paths: &Paths, a: SubscribeArgs) -> Result<String, Error> {
    let min_severity = RiskLevel::parse(&a.min_severity)
        .ok_or_else(|| Error::invalid(format!("`{}` is not normal, elevated or severe", a.min_severity)))?;
    let sub = Subscriber { id: a.id, location: a.loc.location()?, opted_in: !a.opted_out, min_severity, locale: a.locale };
    validate_subscriber(&sub, &Gazetteer::bundled(), &TemplateSet::bundled())?;
    let reg = SubscriberRegistry::open(&paths.subscribers)?;
    let id = sub.id.clone();
    let replaced = reg.upsert(sub)?;
    Ok(format!("{} subscriber {id} ({} total)\n", if replaced { "updated" } else { "added" }, reg.len()))
}

fn dispatch(paths: &Paths, a: DispatchArgs) -> Result<String, Error> {
    let store = ForecastStore::open(&paths.store)?;
    let reader = store.reader();
    let (gz, templates, risk) = (Gazetteer::bundled(), TemplateSet::bundled(), RiskConfig::default());
    let ctx = AdvisoryContext { reader: &reader, gazetteer: &gz, templates: &templates, risk: &risk, utc_offset: default_offset() };
    let subs = SubscriberRegistry::open(&paths.subscribers)?.list();
    let now = Utc::now();
    let candidates = ctx.candidates(&subs, run_arg(&a.run)?, now)?;
    let outbox = FileOutbox::open(&paths.outbox)?;
    match dispatch_alerts(&candidates, &outbox, now) {
        Ok((report, _)) => Ok(format!(
            "sent {} [{}], skipped {} (opted out {}, below severity {}, duplicate {})\n",
            report.sent.len(),
            report.sent.join(", "),
            report.skipped(),
            report.skipped_opted_out,
            report.skipped_below_severity,
            report.skipped_duplicate
        )),
        Err(partial) => Err(Error::new(
            "outbox_write",
            format!("{} (delivered before failure: [{}])", partial.error.unwrap_or_default(), partial.sent.join(", ")),
        )),
    }
}

fn costs(a: CostsArgs) -> Result<String, Error> {
    let preset = load_cost_preset(a.preset.preset.as_deref(), a.preset.config.as_deref())?;
    let doc = cost_document(&preset);
    write_out(&a.preset.out, &doc)?;
    let r = compute_costs(&preset.model);
    let mut rows = vec![vec!["item".to_owned(), "computed".into(), "published".into(), "gap".into()]];
    for row in cost_rows(&r, preset.published.as_ref()) {
        rows.push(vec![row.item.to_owned(), row.computed, row.published.unwrap_or_default(), row.gap.unwrap_or_default()]);
    }
    let mut out = table(&rows);
    if let Some(chain) = doc.get("published_monthly_chain") {
        let c = |k: &str, e: &str| chain[k][e].as_i64().unwrap_or(0);
        let _ = writeln!(
            out,
            "\nfrom the published monthly totals: annual {}–{}, horizon {}–{}, ratio {}x–{}x",
            Cents(c("annual", "low")),
            Cents(c("annual", "high")),
            Cents(c("horizon_total", "low")),
            Cents(c("horizon_total", "high")),
            c("ratio", "low"),
            c("ratio", "high"),
        );
    }
    Ok(out)
}

fn capacity(a: CapacityArgs) -> Result<String, Error> {
    let mut preset = load_capacity_preset(a.preset.preset.as_deref(), a.preset.config.as_deref())?;
    if let Some(h) = &a.headroom {
        preset.model.headroom =
            parse_ratio(h).ok_or_else(|| Error::invalid(format!("headroom `{h}` is not a number")))?;
        preset.model.validate().map_err(Error::invalid)?;
    }
    let (r, doc) = capacity_document(&preset);
    write_out(&a.preset.out, &doc)?;
    let rows = vec![
        vec!["addressable users".to_owned(), format_q(&r.addressable)],
        vec!["active users".into(), format_q(&r.active)],
        vec!["peak requests / minute".into(), format_q(&r.peak_per_minute)],
        vec!["peak requests / second".into(), format_q(&r.peak_per_second)],
        vec!["instances (raw)".into(), format!("{}–{}", r.instances_raw.low, r.instances_raw.high)],
        vec![
            format!("instances (headroom {})", format_q(&r.headroom)),
            format!("{}–{}", r.instances_with_headroom.low, r.instances_with_headroom.high),
        ],
    ];
    let mut out = table(&rows);
    if let Some(p) = &preset.published {
        let _ = writeln!(out, "\npublished instances: {}–{}", p.instances[0], p.instances[1]);
    }
    Ok(out)
}

fn loadgen(a: LoadgenArgs) -> Result<String, Error> {
    let mut cfg = LoadgenConfig::new(a.target, a.rps, duration_arg(a.duration, "--duration")?);
    cfg.max_in_flight = a.max_in_flight;
    cfg.seed = a.seed;
    cfg.mix = if a.mix.is_empty() { default_mix() } else { a.mix };
    let r = run_loadgen(&cfg, &Gazetteer::bundled())?;
    write_out(&a.out, &json!(r))?;
    let q = r.latency_ms;
    Ok(format!(
        "offered {:.1} rps, achieved {:.1} rps over {:.1} s\nscheduled {}, completed {}, errors {}, shed {}, max in flight {}\nlatency ms: p50 {:.2}  p90 {:.2}  p99 {:.2}  max {:.2}\n",
        r.offered_rps, r.achieved_rps, r.duration_s, r.scheduled, r.completed, r.errors, r.shed, r.max_in_flight, q.p50, q.p90, q.p99, q.max
    ))
}

/// Parse arguments, run, print, and return the process exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(out) => {
            print!("{out}");
            0
        }
        Err(e) => {
            eprintln!("{}", json!({ "error": { "kind": e.kind, "message": e.message } }));
            1
        }
    }
}
