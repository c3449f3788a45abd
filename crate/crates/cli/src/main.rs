fn main() {
    std::process::exit(emocaps_cli::run(std::env::args_os()));
}
