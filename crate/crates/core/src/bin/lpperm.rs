fn main() {
    std::process::exit(lpperm::cli::run_cli(std::env::args_os()));
}
