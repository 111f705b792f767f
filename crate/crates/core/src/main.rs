fn main() {
    std::process::exit(cpqr::cli::run_command(std::env::args_os()));
}
