//! Isolated fetch worker: reads one job from stdin, writes the response to stdout.

fn main() -> std::io::Result<()> {
    earlywarn_core::ingest::worker_main()
}
