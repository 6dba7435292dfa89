fn main() {
    if let Err(e) = byzcast_cli::run_cli(std::env::args_os()) {
        eprintln!("byzcast: {e}");
        std::process::exit(e.exit_code());
    }
}
