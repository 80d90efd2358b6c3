fn main() {
    std::process::exit(dose_did::cli::run(std::env::args()));
}
