fn main() {
    std::process::exit(camsim_cli::run_command(std::env::args_os()));
}
