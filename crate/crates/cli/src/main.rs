fn main() {
    std::process::exit(onsager_cli::run_cli(std::env::args_os()));
}
