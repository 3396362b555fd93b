fn main() {
    std::process::exit(vvo_cli::run_cli(std::env::args_os()));
}
