fn main() {
    std::process::exit(dexc::cli::run_from_env());
}
