fn main() {
    std::process::exit(earlywarn::cli::main());
}
