fn main() {
    std::process::exit(locomode_cli::run_cli(std::env::args_os()));
}
