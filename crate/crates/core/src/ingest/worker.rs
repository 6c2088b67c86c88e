//! Worker side of the isolated fetch: job decoding, fault hooks and the
//! fixture read itself. Everything crosses the boundary as bytes.

use std::io::{self, Read, Write};
use std::path::PathBuf;
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::fixture::read_object;
use super::result::{FetchCoords, FetchResult, FETCH_DIMS};
use super::IngestError;
use crate::cycle::{iso8601, parse_time};

/// Fault injected into the next worker launch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fault {
    /// The worker dies abruptly (process abort, or thread panic).
    Crash,
    /// The worker sleeps this many seconds before doing any work.
    Stall { seconds: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct Job {
    pub cycle_time: String,
    pub variables: Vec<String>,
    pub source: String,
    pub cache_dir: PathBuf,
    pub fault: Option<Fault>,
}

#[derive(Debug, Serialize, Deserialize)]
pub(crate) struct DataErrorWire {
    pub kind: String,
    pub message: String,
    pub cycle_time: Option<String>,
    pub variable: Option<String>,
}

const TAG_OK: u8 = b'R';
const TAG_ERR: u8 = b'E';

pub(crate) fn encode_response(result: &Result<FetchResult, IngestError>) -> Vec<u8> {
    match result {
        Ok(r) => {
            let mut out = vec![TAG_OK];
            out.extend_from_slice(&r.to_bytes());
            out
        }
        Err(e) => {
            let wire = match e {
                IngestError::MissingVariable { cycle, variable } => DataErrorWire {
                    kind: "missing_variable".into(),
                    message: e.to_string(),
                    cycle_time: Some(iso8601(*cycle)),
                    variable: Some(variable.clone()),
                },
                other => DataErrorWire {
                    kind: other.kind().into(),
                    message: other.to_string(),
                    cycle_time: None,
                    variable: None,
                },
            };
            let mut out = vec![TAG_ERR];
            out.extend_from_slice(&serde_json::to_vec(&wire).expect("serializable"));
            out
        }
    }
}

/// Decode a worker response. Anything malformed is a worker-lifecycle
/// failure, never a data result.
pub(crate) fn decode_response(bytes: &[u8]) -> Result<FetchResult, IngestError> {
    match bytes.split_first() {
        Some((&TAG_OK, rest)) => {
            let r = FetchResult::from_bytes(rest).map_err(|e| IngestError::WorkerFailure(format!("bad result: {e}")))?;
            r.check().map_err(|e| IngestError::WorkerFailure(format!("inconsistent result: {e}")))?;
            Ok(r)
        }
        Some((&TAG_ERR, rest)) => {
            let w: DataErrorWire =
                serde_json::from_slice(rest).map_err(|e| IngestError::WorkerFailure(format!("bad error record: {e}")))?;
            match (w.kind.as_str(), w.cycle_time.as_deref().and_then(parse_time), w.variable) {
                ("missing_variable", Some(cycle), Some(variable)) => Err(IngestError::MissingVariable { cycle, variable }),
                ("invalid_request", ..) => Err(IngestError::InvalidRequest(w.message)),
                _ => Err(IngestError::Data(w.message)),
            }
        }
        _ => Err(IngestError::WorkerFailure(format!("worker produced {} bytes without a response", bytes.len()))),
    }
}

/// Read every requested object and stack them as `[time=1, variable, lat, lon]`.
pub(crate) fn fetch_from_fixture(job: &Job) -> Result<FetchResult, IngestError> {
    if job.source != super::FIXTURE_SOURCE {
        return Err(IngestError::InvalidRequest(format!("unsupported source `{}`", job.source)));
    }
    let cycle: DateTime<Utc> = parse_time(&job.cycle_time)
        .ok_or_else(|| IngestError::InvalidRequest(format!("unparseable cycle time `{}`", job.cycle_time)))?;
    let mut grid = None;
    let mut values = Vec::new();
    for name in &job.variables {
        let blob = read_object(&job.cache_dir, cycle, name)?;
        match grid {
            None => {
                values.reserve(blob.values.len() * job.variables.len());
                grid = Some(blob.grid);
            }
            Some(g) if g != blob.grid => {
                return Err(IngestError::Data(format!("{name} is on {:?}, cycle grid is {g:?}", blob.grid)));
            }
            Some(_) => {}
        }
        values.extend_from_slice(&blob.values);
    }
    let grid = grid.ok_or_else(|| IngestError::InvalidRequest("no variables requested".into()))?;
    Ok(FetchResult {
        values,
        shape: vec![1, job.variables.len(), grid.nlat, grid.nlon],
        dims: FETCH_DIMS.iter().map(|s| s.to_string()).collect(),
        coords: FetchCoords {
            time: vec![iso8601(cycle)],
            variable: job.variables.clone(),
            lat: grid.latitudes(),
            lon: grid.longitudes(),
        },
    })
}

/// Executed inside the worker, whichever isolation mode launched it.
pub(crate) fn run_job(job_bytes: &[u8], in_process: bool) -> Vec<u8> {
    let job: Job = match serde_json::from_slice(job_bytes) {
        Ok(j) => j,
        Err(e) => return encode_response(&Err(IngestError::InvalidRequest(format!("bad job: {e}")))),
    };
    match job.fault {
        Some(Fault::Crash) if in_process => panic!("injected worker crash"),
        Some(Fault::Crash) => std::process::abort(),
        Some(Fault::Stall { seconds }) => std::thread::sleep(Duration::from_secs_f64(seconds.max(0.0))),
        None => {}
    }
    encode_response(&fetch_from_fixture(&job))
}

/// Entry point for a process worker: job on stdin, response on stdout.
pub fn worker_main() -> io::Result<()> {
    let mut job = Vec::new();
    io::stdin().lock().read_to_end(&mut job)?;
    let response = run_job(&job, false);
    let mut out = io::stdout().lock();
    out.write_all(&response)?;
    out.flush()
}
