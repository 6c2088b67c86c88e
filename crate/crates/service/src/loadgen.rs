//! Open-loop HTTP load generator.
//!
//! Arrivals follow a fixed schedule (`k / rps` seconds after start) no matter
//! how the target responds. Latency runs from the scheduled arrival to the
//! end of the response body, so a slow server cannot hide queueing delay.
//! At most `max_in_flight` requests are outstanding; arrivals beyond the cap
//! are shed and counted, never queued.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use earlywarn_core::ops::LoadReport;
use earlywarn_core::serve::Gazetteer;
use percent_encoding::{utf8_percent_encode, AsciiSet, NON_ALPHANUMERIC};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tokio::sync::Semaphore;
use tokio::task::JoinSet;
use tokio::time::Instant;

#[derive(Debug, thiserror::Error)]
pub enum LoadgenError {
    #[error("target unreachable: {0}")]
    Connectivity(String),
    #[error("invalid load configuration: {0}")]
    InvalidConfig(String),
}

impl LoadgenError {
    pub fn kind(&self) -> &'static str {
        match self {
            LoadgenError::Connectivity(_) => "connectivity",
            LoadgenError::InvalidConfig(_) => "invalid_config",
        }
    }
}

/// Request path templates. `{place}` draws a gazetteer name; `{lat}` and
/// `{lon}` draw a point inside [`COORD_BOX`].
pub fn default_mix() -> Vec<String> {
    vec!["/v1/forecast?place={place}&vars=t2m,tp,tcwv".into(), "/v1/forecast?lat={lat}&lon={lon}&vars=tcwv,tp".into()]
}

/// `(lat_min, lat_max, lon_min, lon_max)` for random coordinates.
pub const COORD_BOX: (f64, f64, f64, f64) = (-35.0, -22.0, 16.0, 33.0);

#[derive(Debug, Clone)]
pub struct LoadgenConfig {
    /// Base URL, e.g. `http://127.0.0.1:8080`.
    pub target: String,
    pub rps: f64,
    pub duration: Duration,
    pub max_in_flight: usize,
    pub mix: Vec<String>,
    pub seed: u64,
    pub request_timeout: Duration,
    pub worker_threads: usize,
}

impl LoadgenConfig {
    pub fn new(target: impl Into<String>, rps: f64, duration: Duration) -> Self {
        Self {
            target: target.into(),
            rps,
            duration,
            max_in_flight: 100,
            mix: default_mix(),
            seed: 0,
            request_timeout: Duration::from_secs(10),
            worker_threads: 2,
        }
    }

    fn validate(&self) -> Result<(), LoadgenError> {
        let bad = |m: &str| Err(LoadgenError::InvalidConfig(m.into()));
        if !(self.rps.is_finite() && self.rps >= 0.0) {
            return bad("rps must be a non-negative number");
        }
        if self.max_in_flight == 0 {
            return bad("max_in_flight must be positive");
        }
        if self.mix.is_empty() || self.mix.iter().any(|t| !t.starts_with('/')) {
            return bad("mix must hold at least one path template starting with `/`");
        }
        Ok(())
    }
}

/// Expand `count` request URLs from the mix, deterministically per seed.
pub fn expand_mix(cfg: &LoadgenConfig, gz: &Gazetteer, count: usize) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let places: Vec<&str> = gz.names().collect();
    let base = cfg.target.trim_end_matches('/');
    let (la0, la1, lo0, lo1) = COORD_BOX;
    (0..count)
        .map(|_| {
            let t = &cfg.mix[rng.random_range(0..cfg.mix.len())];
            let mut path = t.clone();
            if path.contains("{place}") && !places.is_empty() {
                let name = places[rng.random_range(0..places.len())];
                path = path.replace("{place}", &encode_component(name));
            }
            if path.contains("{lat}") {
                path = path.replace("{lat}", &format!("{:.3}", rng.random_range(la0..la1)));
            }
            if path.contains("{lon}") {
                path = path.replace("{lon}", &format!("{:.3}", rng.random_range(lo0..lo1)));
            }
            format!("{base}{path}")
        })
        .collect()
}

/// Unreserved characters pass through; everything else is percent-encoded.
const COMPONENT: &AsciiSet = &NON_ALPHANUMERIC.remove(b'-').remove(b'_').remove(b'.').remove(b'~');

fn encode_component(s: &str) -> String {
    utf8_percent_encode(s, COMPONENT).to_string()
}

enum Outcome {
    Ok(f64),
    Status(f64),
    Transport,
}

/// Drive the target at `cfg.rps` for `cfg.duration`.
pub fn run_loadgen(cfg: &LoadgenConfig, gz: &Gazetteer) -> Result<LoadReport, LoadgenError> {
    cfg.validate()?;
    let scheduled = (cfg.rps * cfg.duration.as_secs_f64()).round() as usize;
    let urls = expand_mix(cfg, gz, scheduled);
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(cfg.worker_threads.max(1))
        .enable_all()
        .build()
        .map_err(|e| LoadgenError::InvalidConfig(format!("runtime: {e}")))?;
    runtime.block_on(drive(cfg, urls))
}

async fn drive(cfg: &LoadgenConfig, urls: Vec<String>) -> Result<LoadReport, LoadgenError> {
    let client = reqwest::Client::builder()
        .timeout(cfg.request_timeout)
        .pool_max_idle_per_host(cfg.max_in_flight)
        .build()
        .map_err(|e| LoadgenError::InvalidConfig(e.to_string()))?;
    let probe = format!("{}/v1/runs/latest", cfg.target.trim_end_matches('/'));
    client.get(&probe).send().await.map_err(|e| LoadgenError::Connectivity(format!("{probe}: {e}")))?;
    if urls.is_empty() {
        return Ok(LoadReport::empty(cfg.duration));
    }

    let permits = Arc::new(Semaphore::new(cfg.max_in_flight));
    let max_in_flight = Arc::new(AtomicU64::new(0));
    let mut tasks = JoinSet::new();
    let mut shed = 0u64;
    let start = Instant::now();
    for (k, url) in urls.iter().enumerate() {
        let due = start + Duration::from_secs_f64(k as f64 / cfg.rps);
        tokio::time::sleep_until(due).await;
        let Ok(permit) = permits.clone().try_acquire_owned() else {
            shed += 1;
            continue;
        };
        let outstanding = (cfg.max_in_flight - permits.available_permits()) as u64;
        max_in_flight.fetch_max(outstanding, Ordering::Relaxed);
        let (client, url) = (client.clone(), url.clone());
        tasks.spawn(async move {
            let outcome = match client.get(&url).send().await {
                Ok(resp) => {
                    let ok = resp.status().is_success();
                    match resp.bytes().await {
                        Ok(_) => {
                            let ms = due.elapsed().as_secs_f64() * 1e3;
                            if ok {
                                Outcome::Ok(ms)
                            } else {
                                Outcome::Status(ms)
                            }
                        }
                        Err(_) => Outcome::Transport,
                    }
                }
                Err(_) => Outcome::Transport,
            };
            drop(permit);
            outcome
        });
    }

    let mut latencies = Vec::with_capacity(urls.len());
    let mut errors = 0u64;
    while let Some(joined) = tasks.join_next().await {
        match joined {
            Ok(Outcome::Ok(ms)) => latencies.push(ms),
            Ok(Outcome::Status(ms)) => {
                latencies.push(ms);
                errors += 1;
            }
            Ok(Outcome::Transport) | Err(_) => errors += 1,
        }
    }
    Ok(LoadReport::from_run(
        cfg.rps,
        cfg.duration,
        urls.len() as u64,
        &latencies,
        errors,
        shed,
        max_in_flight.load(Ordering::Relaxed),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mix_expansion_is_deterministic_and_well_formed() {
        let gz = Gazetteer::bundled();
        let cfg = LoadgenConfig::new("http://h:1/", 10.0, Duration::from_secs(1));
        let a = expand_mix(&cfg, &gz, 200);
        assert_eq!(a, expand_mix(&cfg, &gz, 200));
        assert!(a.iter().all(|u| u.starts_with("http://h:1/v1/forecast?") && !u.contains('{') && !u.contains(' ')));
        assert!(a.iter().any(|u| u.contains("place=")) && a.iter().any(|u| u.contains("lat=")));
    }

    #[test]
    fn component_encoding() {
        assert_eq!(encode_component("Port Elizabeth"), "Port%20Elizabeth");
        assert_eq!(encode_component("Mbombela"), "Mbombela");
    }

    #[test]
    fn config_validation() {
        let mut cfg = LoadgenConfig::new("http://h:1", -1.0, Duration::from_secs(1));
        assert_eq!(cfg.validate().unwrap_err().kind(), "invalid_config");
        cfg.rps = 1.0;
        cfg.max_in_flight = 0;
        assert!(cfg.validate().is_err());
        cfg.max_in_flight = 1;
        cfg.mix = vec!["v1".into()];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn unreachable_target_is_a_connectivity_error() {
        let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
        let cfg = LoadgenConfig::new(format!("http://127.0.0.1:{port}"), 1.0, Duration::from_secs(1));
        let err = run_loadgen(&cfg, &Gazetteer::bundled()).unwrap_err();
        assert_eq!(err.kind(), "connectivity");
    }
}
