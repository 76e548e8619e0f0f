fn main() {
    std::process::exit(gcsd::cli::run(std::env::args_os()));
}
