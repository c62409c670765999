fn main() {
    std::process::exit(pitchkin::cli::run(std::env::args_os()));
}
