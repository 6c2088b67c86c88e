use std::path::PathBuf;
use std::time::{Duration, Instant};

use earlywarn_core::cycle::parse_time;
use earlywarn_core::grid::{build_catalog, grid_spec, VariableId};
use earlywarn_core::inference::make_initial_state;
use earlywarn_core::ingest::{assemble_initial_tensor, Fault, FixtureStore, IngestError, Ingestor, WorkerLauncher};
use rand::seq::IndexedRandom;
use rand::SeedableRng;

fn launcher() -> WorkerLauncher {
    WorkerLauncher::Process { program: PathBuf::from(env!("CARGO_BIN_EXE_earlywarn-fetch-worker")), args: vec![] }
}

fn seeded_store(res: f64) -> (tempfile::TempDir, FixtureStore, chrono::DateTime<chrono::Utc>) {
    let dir = tempfile::tempdir().unwrap();
    let store = FixtureStore::open(dir.path()).unwrap();
    let cycle = parse_time("2026-02-03T06:00:00Z").unwrap();
    let grid = grid_spec(res).unwrap();
    let state = make_initial_state(&grid, &build_catalog(), cycle, 11).unwrap();
    store.put_state(&state, grid).unwrap();
    (dir, store, cycle)
}

fn all_vars() -> Vec<VariableId> {
    build_catalog().ids().cloned().collect()
}

#[test]
fn crash_is_a_worker_failure_and_the_next_fetch_succeeds() {
    let (_dir, store, cycle) = seeded_store(10.0);
    let ingestor = Ingestor::new(launcher(), build_catalog());
    let req = store.request(cycle, vec![VariableId::new("tcwv"), VariableId::new("tp")]);
    ingestor.inject_fault(Fault::Crash);
    let err = ingestor.fetch_initial_conditions(&req, &store).unwrap_err();
    assert!(matches!(err, IngestError::WorkerFailure(_)), "{err:?}");
    let ok = ingestor.fetch_initial_conditions(&req, &store).unwrap();
    assert_eq!(ok.shape, vec![1, 2, 19, 36]);
    assert_eq!(ingestor.launches(), 2);
}

#[test]
fn stall_times_out_within_a_second_of_the_limit() {
    let (_dir, store, cycle) = seeded_store(10.0);
    let ingestor = Ingestor::new(launcher(), build_catalog());
    let timeout = Duration::from_millis(1500);
    let req = store.request(cycle, vec![VariableId::new("t2m")]).with_timeout(timeout);
    ingestor.inject_fault(Fault::Stall { seconds: 30.0 });
    let started = Instant::now();
    let err = ingestor.fetch_initial_conditions(&req, &store).unwrap_err();
    let waited = started.elapsed();
    assert!(matches!(err, IngestError::FetchTimeout(_)), "{err:?}");
    assert!(waited >= timeout && waited <= timeout + Duration::from_secs(1), "{waited:?}");
    assert!(ingestor.fetch_initial_conditions(&req, &store).is_ok());
}

#[test]
fn missing_object_is_a_typed_data_error() {
    let (dir, store, cycle) = seeded_store(10.0);
    std::fs::remove_file(store.object_path(cycle, "sst")).unwrap();
    let ingestor = Ingestor::new(launcher(), build_catalog());
    let err = ingestor.fetch_initial_conditions(&store.request(cycle, all_vars()), &store).unwrap_err();
    assert!(matches!(&err, IngestError::MissingVariable { variable, .. } if variable == "sst"), "{err:?}");
    drop(dir);
}

#[test]
fn full_catalog_at_one_degree_is_fast_and_assembles() {
    let (_dir, store, cycle) = seeded_store(1.0);
    let ingestor = Ingestor::new(launcher(), build_catalog());
    let req = store.request(cycle, all_vars());
    // Warm the page cache, as the fixture store stands in for a warm cache.
    ingestor.fetch_initial_conditions(&req, &store).unwrap();
    let started = Instant::now();
    let res = ingestor.fetch_initial_conditions(&req, &store).unwrap();
    let took = started.elapsed();
    assert!(took < Duration::from_secs(3), "{took:?}");
    assert_eq!(res.shape, vec![1, 75, 181, 360]);
    let grid = grid_spec(1.0).unwrap();
    let tensor = assemble_initial_tensor(&res, &build_catalog(), &grid).unwrap();
    let direct = make_initial_state(&grid, &build_catalog(), cycle, 11).unwrap();
    assert!(tensor.values().iter().zip(direct.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
    assert_eq!(tensor.coords(), direct.coords());
}

#[test]
fn random_subsets_match_the_objects_on_disk() {
    let (_dir, store, cycle) = seeded_store(15.0);
    let ingestor = Ingestor::new(launcher(), build_catalog());
    let vars = all_vars();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    for _ in 0..8 {
        let k = 1 + (rand::Rng::random::<u32>(&mut rng) as usize % 10);
        let pick: Vec<VariableId> = vars.choose_multiple(&mut rng, k).cloned().collect();
        let res = ingestor.fetch_initial_conditions(&store.request(cycle, pick.clone()), &store).unwrap();
        for v in &pick {
            let blob = store.get(cycle, v.as_str()).unwrap();
            let got = res.field(v.as_str()).unwrap();
            assert!(got.iter().zip(&blob.values).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }
}
