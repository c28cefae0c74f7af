fn main() {
    std::process::exit(qfluct::cli::run_from_args(std::env::args_os()));
}
