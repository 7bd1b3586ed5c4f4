fn main() {
    std::process::exit(floodgate_cli::run(std::env::args_os()));
}
