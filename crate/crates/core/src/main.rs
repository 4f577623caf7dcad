fn main() {
    std::process::exit(spinbayes::cli::run_command(std::env::args_os()));
}
