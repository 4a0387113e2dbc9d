fn main() {
    std::process::exit(qlyap::cli::run_cli(std::env::args_os()));
}
