fn main() {
    std::process::exit(leakybias::cli::run_with_args(std::env::args_os()));
}
