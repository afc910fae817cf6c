fn main() {
    std::process::exit(graphwave_cli::dispatch(std::env::args_os()));
}
