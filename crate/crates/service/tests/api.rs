use std::time::Duration;

use chrono::{DateTime, TimeZone, Utc};
use earlywarn::api::{serve_api, ApiConfig, ServiceHandle};
use earlywarn_core::grid::{grid_spec, latlon_to_index, CoordinateSet, ForecastTensor, VariableId};
use earlywarn_core::serve::Gazetteer;
use earlywarn_core::store::ForecastStore;
use serde_json::{json, Value};

const VARS: [&str; 3] = ["t2m", "tcwv", "tp"];

fn run_time() -> DateTime<Utc> {
    // A Sunday; leads 54..=114 h fall Tuesday to Thursday at UTC+2.
    Utc.with_ymd_and_hms(2026, 2, 8, 0, 0, 0).unwrap()
}

/// 1° run over t2m/tcwv/tp. Skukuza's node is severe, Mbombela's elevated,
/// every other node quiet; t2m encodes the node index for exact checks.
fn fixture() -> ForecastTensor {
    let g = grid_spec(1.0).unwrap();
    let gz = Gazetteer::bundled();
    let node = |place: &str| {
        let (lat, lon) = gz.lookup(place).unwrap();
        let (i, j) = latlon_to_index(&g, lat, lon).unwrap();
        i * g.nlon + j
    };
    let (severe, elevated) = (node("Skukuza"), node("Mbombela"));
    assert_ne!(severe, elevated);
    let plane = g.point_count();
    let mut values = Vec::with_capacity(61 * 3 * plane);
    for lead in 0..61 {
        let wet = (10..=18).contains(&lead);
        for v in 0..3 {
            for p in 0..plane {
                values.push(match (v, p) {
                    (0, _) => (p % 1000) as f32 + lead as f32 * 0.5,
                    (1, p) if p == severe && wet => 62.0,
                    (1, p) if p == elevated && wet => 55.0,
                    (1, _) => 20.0,
                    (2, p) if p == severe && wet => 40.0,
                    (2, _) => 1.0,
                    _ => unreachable!(),
                });
            }
        }
    }
    let coords = CoordinateSet::from_parts(
        vec![0],
        vec![run_time()],
        (0..61).map(|k| 6 * k).collect(),
        VARS.iter().map(|v| VariableId::new(*v)).collect(),
        g.latitudes(),
        g.longitudes(),
    )
    .unwrap();
    ForecastTensor::new(values, coords).unwrap()
}

struct Harness {
    _dir: tempfile::TempDir,
    store: ForecastStore,
    tensor: ForecastTensor,
    server: ServiceHandle,
    rt: tokio::runtime::Runtime,
    client: reqwest::Client,
    outbox: std::path::PathBuf,
}

impl Harness {
    fn start() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let store = ForecastStore::open(dir.path().join("store")).unwrap();
        let tensor = fixture();
        store.store_forecast(run_time(), &tensor).unwrap();
        let outbox = dir.path().join("outbox.ndjson");
        let mut cfg = ApiConfig::new("127.0.0.1:0".parse().unwrap(), &outbox);
        cfg.subscribers = Some(dir.path().join("subscribers.json"));
        let server = serve_api(store.reader(), cfg).unwrap();
        let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build().unwrap();
        Self { _dir: dir, store, tensor, server, rt, client: reqwest::Client::new(), outbox }
    }

    fn get(&self, path: &str) -> (u16, Value) {
        let url = format!("{}{path}", self.server.url());
        self.rt.block_on(async {
            let r = self.client.get(url).send().await.unwrap();
            let status = r.status().as_u16();
            (status, serde_json::from_slice(&r.bytes().await.unwrap()).unwrap())
        })
    }

    fn post(&self, path: &str, body: Option<Value>) -> (u16, Value) {
        let url = format!("{}{path}", self.server.url());
        self.rt.block_on(async {
            let mut req = self.client.post(url);
            if let Some(b) = body {
                req = req.header("content-type", "application/json").body(b.to_string());
            }
            let r = req.send().await.unwrap();
            let status = r.status().as_u16();
            (status, serde_json::from_slice(&r.bytes().await.unwrap()).unwrap())
        })
    }
}

fn floats(v: &Value) -> Vec<f32> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap() as f32).collect()
}

#[test]
fn forecast_by_place_returns_the_stored_slices() {
    let h = Harness::start();
    let (status, body) = h.get("/v1/forecast?place=johannesburg&vars=t2m,tp,tcwv");
    assert_eq!(status, 200, "{body}");
    assert_eq!(body["lead_hours"].as_array().unwrap().len(), 61);
    assert_eq!(body["location"]["place"], "Johannesburg");
    let (i, j) = (body["location"]["lat_index"].as_u64().unwrap() as usize, body["location"]["lon_index"].as_u64().unwrap() as usize);
    let nlon = h.tensor.shape()[5];
    let p = h.tensor.plane_len();
    for (k, name) in ["t2m", "tp", "tcwv"].iter().enumerate() {
        assert_eq!(body["series"][k]["variable"], *name);
        let v = VARS.iter().position(|x| x == name).unwrap();
        let want: Vec<f32> = (0..61).map(|l| h.tensor.values()[(l * 3 + v) * p + i * nlon + j]).collect();
        assert_eq!(floats(&body["series"][k]["values"]), want);
    }
}

#[test]
fn forecast_by_coordinates_defaults_and_degenerate_subsets() {
    let h = Harness::start();
    let (status, body) = h.get("/v1/forecast?lat=-26.2&lon=28.05");
    assert_eq!(status, 200);
    assert_eq!((body["location"]["lat"].as_f64(), body["location"]["lon"].as_f64()), (Some(-26.0), Some(28.0)));
    let names: Vec<&str> = body["series"].as_array().unwrap().iter().map(|s| s["variable"].as_str().unwrap()).collect();
    assert_eq!(names, ["t2m", "tp", "tcwv"]);
    let (status, body) = h.get("/v1/forecast?place=Durban&vars=");
    assert_eq!(status, 200);
    assert!(body["series"].as_array().unwrap().is_empty());
    assert_eq!(body["lead_hours"].as_array().unwrap().len(), 61);
    let iso = "2026-02-08T00:00:00Z";
    assert_eq!(h.get(&format!("/v1/forecast?place=Durban&run={iso}")).0, 200);
}

#[test]
fn errors_carry_kind_and_status() {
    let h = Harness::start();
    for (path, status, kind) in [
        ("/v1/forecast?place=Atlantis-9Q", 404, "geocode_miss"),
        ("/v1/forecast?place=Durban&vars=sst", 400, "unknown_variable"),
        ("/v1/forecast", 400, "invalid_location"),
        ("/v1/forecast?lat=95&lon=0", 400, "invalid_location"),
        ("/v1/forecast?lat=abc&lon=0", 400, "invalid_location"),
        ("/v1/forecast?place=Durban&run=yesterday", 400, "invalid_argument"),
        ("/v1/forecast?place=Durban&run=2026-02-08T06:00:00Z", 404, "no_such_run"),
        ("/v1/risk?place=Atlantis-9Q", 404, "geocode_miss"),
        ("/v1/risk?place=Durban&locale=zu", 400, "invalid_argument"),
        ("/v1/nope", 404, "not_found"),
    ] {
        let (got, body) = h.get(path);
        assert_eq!((got, body["error"]["kind"].as_str()), (status, Some(kind)), "{path}: {body}");
        assert!(!body["error"]["message"].as_str().unwrap().is_empty());
    }
}

#[test]
fn latest_run_and_empty_store() {
    let h = Harness::start();
    let (status, body) = h.get("/v1/runs/latest");
    assert_eq!(status, 200);
    assert_eq!(body["row_count"], 65_160);
    assert_eq!(body["forecast_run_time"], "2026-02-08T00:00:00Z");

    let dir = tempfile::tempdir().unwrap();
    let empty = ForecastStore::open(dir.path()).unwrap();
    let server = serve_api(empty.reader(), ApiConfig::new("127.0.0.1:0".parse().unwrap(), dir.path().join("o"))).unwrap();
    let url = format!("{}/v1/forecast?place=Durban", server.url());
    let (status, body) = h.rt.block_on(async {
        let r = reqwest::get(url).await.unwrap();
        (r.status().as_u16(), serde_json::from_slice::<Value>(&r.bytes().await.unwrap()).unwrap())
    });
    assert_eq!((status, body["error"]["kind"].as_str()), (404, Some("no_runs")));
}

#[test]
fn risk_levels_and_rendered_summaries() {
    let h = Harness::start();
    let (status, body) = h.get("/v1/risk?place=Skukuza");
    assert_eq!(status, 200, "{body}");
    assert_eq!(body["level"], "severe");
    assert_eq!(body["signals"].as_array().unwrap().len(), 2);
    let summary = body["summary"].as_str().unwrap();
    assert!(summary.contains("Tuesday through Thursday"), "{summary}");
    assert_eq!(body["template_id"], "severe.en");

    let (_, body) = h.get("/v1/risk?place=Kruger%20Park&locale=af");
    assert_eq!(body["level"], "severe");
    assert!(body["summary"].as_str().unwrap().contains("Dinsdag"));

    let (_, body) = h.get("/v1/risk?place=Nelspruit");
    assert_eq!(body["level"], "elevated");
    let (_, body) = h.get("/v1/risk?place=Durban");
    assert_eq!(body["level"], "normal");
    assert!(body["window"].is_null());
}

#[test]
fn subscribers_and_idempotent_dispatch() {
    let h = Harness::start();
    let sub = |id: &str, min: &str, opted_in: bool| {
        json!({ "id": id, "location": { "place": "Mbombela" }, "opted_in": opted_in, "min_severity": min })
    };
    assert_eq!(h.post("/v1/subscribers", Some(sub("severe-only", "severe", true))).0, 201);
    assert_eq!(h.post("/v1/subscribers", Some(sub("elevated-up", "elevated", true))).0, 201);
    assert_eq!(h.post("/v1/subscribers", Some(sub("opted-out", "normal", true))).0, 201);
    let (status, body) = h.post("/v1/subscribers", Some(sub("opted-out", "normal", false)));
    assert_eq!((status, body["replaced"].as_bool()), (200, Some(true)));

    let (status, report) = h.post("/v1/dispatch", None);
    assert_eq!(status, 200, "{report}");
    assert_eq!(report["sent"], json!(["elevated-up"]));
    assert_eq!((report["skipped_opted_out"].as_u64(), report["skipped_below_severity"].as_u64()), (Some(1), Some(1)));

    let (_, again) = h.post("/v1/dispatch", Some(json!({ "run": "2026-02-08T00:00:00Z" })));
    assert_eq!(again["sent"], json!([]));
    assert_eq!(again["skipped_duplicate"], 1);

    let lines: Vec<Value> = std::fs::read_to_string(&h.outbox)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 1);
    assert_eq!(lines[0]["recipient"], "elevated-up");
    assert_eq!(lines[0]["dedup_key"], "elevated-up|2026-02-08T00:00:00Z|elevated");
}

#[test]
fn bad_subscriber_bodies_are_rejected() {
    let h = Harness::start();
    let (status, body) = h.post("/v1/subscribers", Some(json!({ "id": "x" })));
    assert_eq!((status, body["error"]["kind"].as_str()), (400, Some("invalid_argument")));
    let far = json!({ "id": "x", "location": { "place": "Atlantis-9Q" }, "opted_in": true, "min_severity": "severe" });
    assert_eq!(h.post("/v1/subscribers", Some(far)).1["error"]["kind"], "geocode_miss");
    let (_, body) = h.post("/v1/dispatch", Some(json!({ "run": "nope" })));
    assert_eq!(body["error"]["kind"], "invalid_argument");
}

#[test]
fn concurrent_requests_all_succeed_and_are_instrumented() {
    let h = Harness::start();
    let gz = Gazetteer::bundled();
    let places: Vec<String> = gz.names().map(|n| n.replace(' ', "%20")).collect();
    let base = h.server.url();
    let statuses = h.rt.block_on(async {
        let mut set = tokio::task::JoinSet::new();
        for k in 0..100 {
            let url = format!("{base}/v1/forecast?place={}&vars=t2m,tp,tcwv", places[k % places.len()]);
            let c = h.client.clone();
            set.spawn(async move { c.get(url).send().await.map(|r| r.status().as_u16()).unwrap_or(0) });
        }
        let mut out = Vec::new();
        while let Some(s) = set.join_next().await {
            out.push(s.unwrap());
        }
        out
    });
    assert_eq!(statuses.len(), 100);
    assert!(statuses.iter().all(|&s| s == 200), "{statuses:?}");

    let (_, m) = h.get("/v1/metrics");
    assert_eq!(m["stages"]["requests"], 100);
    assert_eq!(m["budget_ms"]["query"], 100.0);
    for stage in ["geocode_ms", "query_ms", "format_ms", "total_ms"] {
        let q = &m["stages"][stage];
        assert!(q["p50"].as_f64().unwrap() <= q["p99"].as_f64().unwrap(), "{m}");
    }
    assert_eq!(h.store.runs().len(), 1);
}

#[test]
fn shutdown_drains_and_releases_the_port() {
    let h = Harness::start();
    let url = format!("{}/v1/forecast?place=Durban", h.server.url());
    let addr = h.server.local_addr();
    let pending: Vec<_> = (0..20).map(|_| h.rt.spawn(reqwest::get(url.clone()))).collect();
    std::thread::sleep(Duration::from_millis(50));
    let Harness { server, rt, .. } = h;
    server.shutdown().unwrap();
    for p in pending {
        if let Ok(r) = rt.block_on(p).unwrap() {
            assert_eq!(r.status().as_u16(), 200);
        }
    }
    let refused = rt.block_on(reqwest::get(format!("http://{addr}/v1/runs/latest")));
    assert!(refused.is_err());
}

#[test]
fn port_in_use_is_a_startup_error() {
    let taken = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let cfg = ApiConfig::new(taken.local_addr().unwrap(), dir.path().join("o"));
    let err = serve_api(ForecastStore::in_memory().reader(), cfg).err().unwrap();
    assert_eq!(err.kind, "bind_failed");
}
