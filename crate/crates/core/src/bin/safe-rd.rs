fn main() {
    std::process::exit(safe_rd::cli::run(std::env::args_os()));
}
