//! Initial-condition ingestion through an isolated worker.
//!
//! Each fetch runs in its own worker (a child process by default) with its
//! own runtime and I/O lifecycle. The request goes in as serialized bytes and
//! the [`FetchResult`] comes back the same way, so a worker that crashes or
//! stalls can never leave shared state behind in the caller. Fetches are
//! serialized: one in flight per [`Ingestor`].

mod blob;
mod fixture;
mod result;
mod worker;

use std::io::{Read, Write};
use std::path::PathBuf;
use std::process::{Child, Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc::{self, Receiver, TryRecvError};
use std::sync::{Mutex, MutexGuard};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};

pub use crate::cycle::align_cycle;
pub use blob::{BlobError, GridBlob, BLOB_MAGIC};
pub use fixture::FixtureStore;
pub use result::{FetchCoords, FetchResult, FETCH_DIMS, RESULT_MAGIC};
pub use worker::{worker_main, Fault};

use crate::cycle::{iso8601, is_cycle_aligned, parse_time};
use crate::grid::{CoordinateSet, ForecastTensor, GridSpec, VariableCatalog, VariableId};

pub const FIXTURE_SOURCE: &str = "fixture";
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(900);

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("invalid fetch request: {0}")]
    InvalidRequest(String),
    #[error("variable {variable} missing for cycle {}", iso8601(*cycle))]
    MissingVariable { cycle: DateTime<Utc>, variable: String },
    #[error("fetch timed out after {0:?}")]
    FetchTimeout(Duration),
    #[error("worker failure: {0}")]
    WorkerFailure(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("cannot assemble initial tensor: missing {missing:?}{detail}")]
    Assembly { missing: Vec<String>, detail: String },
}

impl IngestError {
    pub fn kind(&self) -> &'static str {
        match self {
            IngestError::InvalidRequest(_) => "invalid_request",
            IngestError::MissingVariable { .. } => "missing_variable",
            IngestError::FetchTimeout(_) => "fetch_timeout",
            IngestError::WorkerFailure(_) => "worker_failure",
            IngestError::Data(_) => "data_error",
            IngestError::Assembly { .. } => "assembly_error",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FetchRequest {
    pub cycle_time: DateTime<Utc>,
    pub variables: Vec<VariableId>,
    pub source: String,
    /// Root of the fixture store, which doubles as the cache.
    pub cache_dir: PathBuf,
    pub timeout: Duration,
}

impl FetchRequest {
    pub fn new(cycle_time: DateTime<Utc>, variables: Vec<VariableId>, cache_dir: PathBuf) -> Self {
        Self { cycle_time, variables, source: FIXTURE_SOURCE.into(), cache_dir, timeout: DEFAULT_TIMEOUT }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    /// Cycle alignment and catalog membership, checked before any launch.
    pub fn validate(&self, catalog: &VariableCatalog) -> Result<(), IngestError> {
        if !is_cycle_aligned(self.cycle_time) {
            return Err(IngestError::InvalidRequest(format!(
                "cycle time {} is not on a 00/06/12/18Z cycle",
                iso8601(self.cycle_time)
            )));
        }
        if self.variables.is_empty() {
            return Err(IngestError::InvalidRequest("no variables requested".into()));
        }
        if let Some(v) = self.variables.iter().find(|v| !catalog.contains(v.as_str())) {
            return Err(IngestError::MissingVariable { cycle: self.cycle_time, variable: v.to_string() });
        }
        Ok(())
    }
}

/// How a worker is launched.
#[derive(Debug, Clone)]
pub enum WorkerLauncher {
    /// A child process speaking the job protocol on stdin/stdout, e.g. the
    /// `earlywarn-fetch-worker` binary.
    Process { program: PathBuf, args: Vec<String> },
    /// A dedicated thread with its own stack, fed the same serialized job.
    /// Crashes are contained; stalled threads are abandoned on timeout.
    Thread,
}

pub struct Ingestor {
    launcher: WorkerLauncher,
    catalog: VariableCatalog,
    poll_interval: Duration,
    in_flight: Mutex<()>,
    pending_fault: Mutex<Option<Fault>>,
    launches: AtomicUsize,
}

impl Ingestor {
    pub fn new(launcher: WorkerLauncher, catalog: VariableCatalog) -> Self {
        Self {
            launcher,
            catalog,
            poll_interval: Duration::from_millis(10),
            in_flight: Mutex::new(()),
            pending_fault: Mutex::new(None),
            launches: AtomicUsize::new(0),
        }
    }

    pub fn with_poll_interval(mut self, interval: Duration) -> Self {
        self.poll_interval = interval;
        self
    }

    /// Arm a fault for the next launched worker only.
    pub fn inject_fault(&self, fault: Fault) {
        *self.pending_fault.lock().unwrap() = Some(fault);
    }

    /// Workers launched so far.
    pub fn launches(&self) -> usize {
        self.launches.load(Ordering::SeqCst)
    }

    /// Fetch and wait for the result.
    pub fn fetch_initial_conditions(&self, req: &FetchRequest, store: &FixtureStore) -> Result<FetchResult, IngestError> {
        self.submit(req, store)?.wait()
    }

    /// Launch a worker for `req` and return a pollable handle. Blocks only
    /// while another fetch holds the in-flight slot.
    pub fn submit(&self, req: &FetchRequest, store: &FixtureStore) -> Result<FetchHandle<'_>, IngestError> {
        req.validate(&self.catalog)?;
        if req.cache_dir != store.root() {
            return Err(IngestError::InvalidRequest(format!(
                "cache_dir {} is not the fixture store root {}",
                req.cache_dir.display(),
                store.root().display()
            )));
        }
        let guard = self.in_flight.lock().unwrap_or_else(|p| p.into_inner());
        let job = worker::Job {
            cycle_time: iso8601(req.cycle_time),
            variables: req.variables.iter().map(|v| v.to_string()).collect(),
            source: req.source.clone(),
            cache_dir: req.cache_dir.clone(),
            fault: self.pending_fault.lock().unwrap().take(),
        };
        let job = serde_json::to_vec(&job).expect("job is serializable");
        self.launches.fetch_add(1, Ordering::SeqCst);
        let running = match &self.launcher {
            WorkerLauncher::Process { program, args } => Running::spawn_process(program, args, job)?,
            WorkerLauncher::Thread => Running::spawn_thread(job),
        };
        Ok(FetchHandle {
            _slot: guard,
            running: Some(running),
            started: Instant::now(),
            timeout: req.timeout,
            poll_interval: self.poll_interval,
        })
    }
}

enum Running {
    Process { child: Child, stdout: Option<JoinHandle<Vec<u8>>>, stderr: Option<JoinHandle<Vec<u8>>> },
    Thread { rx: Receiver<Vec<u8>> },
}

fn drain<R: Read + Send + 'static>(mut r: R) -> JoinHandle<Vec<u8>> {
    std::thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = r.read_to_end(&mut buf);
        buf
    })
}

impl Running {
    fn spawn_process(program: &PathBuf, args: &[String], job: Vec<u8>) -> Result<Self, IngestError> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| IngestError::WorkerFailure(format!("cannot launch {}: {e}", program.display())))?;
        let mut stdin = child.stdin.take().expect("piped stdin");
        std::thread::spawn(move || {
            let _ = stdin.write_all(&job);
        });
        let stdout = drain(child.stdout.take().expect("piped stdout"));
        let stderr = drain(child.stderr.take().expect("piped stderr"));
        Ok(Running::Process { child, stdout: Some(stdout), stderr: Some(stderr) })
    }

    fn spawn_thread(job: Vec<u8>) -> Self {
        let (tx, rx) = mpsc::channel();
        std::thread::Builder::new()
            .name("fetch-worker".into())
            .spawn(move || {
                let response = worker::run_job(&job, true);
                let _ = tx.send(response);
            })
            .expect("spawn fetch worker thread");
        Running::Thread { rx }
    }

    fn poll(&mut self) -> Option<Result<FetchResult, IngestError>> {
        match self {
            Running::Process { child, stdout, stderr } => {
                let status = match child.try_wait() {
                    Ok(None) => return None,
                    Ok(Some(s)) => s,
                    Err(e) => return Some(Err(IngestError::WorkerFailure(format!("wait failed: {e}")))),
                };
                let out = stdout.take().map(|h| h.join().unwrap_or_default()).unwrap_or_default();
                let err = stderr.take().map(|h| h.join().unwrap_or_default()).unwrap_or_default();
                if !status.success() {
                    let tail = String::from_utf8_lossy(&err[err.len().saturating_sub(512)..]).trim().to_owned();
                    return Some(Err(IngestError::WorkerFailure(format!("worker exited with {status}: {tail}"))));
                }
                Some(worker::decode_response(&out))
            }
            Running::Thread { rx } => match rx.try_recv() {
                Ok(bytes) => Some(worker::decode_response(&bytes)),
                Err(TryRecvError::Empty) => None,
                Err(TryRecvError::Disconnected) => {
                    Some(Err(IngestError::WorkerFailure("worker thread terminated without a response".into())))
                }
            },
        }
    }

    fn cancel(&mut self) {
        if let Running::Process { child, .. } = self {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

/// An in-flight fetch. Holds the ingestor's single in-flight slot until it
/// completes or is dropped.
pub struct FetchHandle<'a> {
    _slot: MutexGuard<'a, ()>,
    running: Option<Running>,
    started: Instant,
    timeout: Duration,
    poll_interval: Duration,
}

impl FetchHandle<'_> {
    /// Non-blocking check. Returns `Some` exactly once.
    pub fn poll(&mut self) -> Option<Result<FetchResult, IngestError>> {
        let running = self.running.as_mut()?;
        if let Some(r) = running.poll() {
            self.running = None;
            return Some(r);
        }
        if self.started.elapsed() >= self.timeout {
            running.cancel();
            self.running = None;
            return Some(Err(IngestError::FetchTimeout(self.timeout)));
        }
        None
    }

    /// Poll until the worker finishes or the timeout expires.
    pub fn wait(mut self) -> Result<FetchResult, IngestError> {
        loop {
            if let Some(r) = self.poll() {
                return r;
            }
            if self.running.is_none() {
                return Err(IngestError::WorkerFailure("fetch already completed".into()));
            }
            std::thread::sleep(self.poll_interval);
        }
    }
}

impl Drop for FetchHandle<'_> {
    fn drop(&mut self) {
        if let Some(r) = self.running.as_mut() {
            r.cancel();
        }
    }
}

/// Reorder a complete fetch into the model's `[1, 1, [0], 75, lat, lon]` frame.
pub fn assemble_initial_tensor(
    res: &FetchResult,
    catalog: &VariableCatalog,
    spec: &GridSpec,
) -> Result<ForecastTensor, IngestError> {
    let assembly = |detail: String| IngestError::Assembly { missing: vec![], detail: format!(" ({detail})") };
    res.check().map_err(assembly)?;
    let [time] = res.coords.time.as_slice() else {
        return Err(assembly(format!("expected one time, got {}", res.coords.time.len())));
    };
    let cycle = parse_time(time).ok_or_else(|| assembly(format!("unparseable time `{time}`")))?;
    let same = |a: &[f64], b: &[f64]| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits());
    if !same(&res.coords.lat, &spec.latitudes()) || !same(&res.coords.lon, &spec.longitudes()) {
        return Err(assembly(format!("grid does not match {}-degree spec", spec.resolution_deg)));
    }
    if let Some(extra) = res.coords.variable.iter().find(|v| !catalog.contains(v)) {
        return Err(assembly(format!("unexpected variable `{extra}`")));
    }
    let missing: Vec<String> = catalog
        .ids()
        .filter(|id| !res.coords.variable.iter().any(|v| v == id.as_str()))
        .map(|id| id.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(IngestError::Assembly { missing, detail: String::new() });
    }
    let mut values = Vec::with_capacity(catalog.len() * spec.point_count());
    for id in catalog.ids() {
        values.extend_from_slice(res.field(id.as_str()).expect("coverage checked"));
    }
    ForecastTensor::new(values, CoordinateSet::initial(spec, catalog, cycle))
        .map_err(|e| assembly(e.to_string()))
}
