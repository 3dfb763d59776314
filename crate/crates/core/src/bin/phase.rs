fn main() {
    std::process::exit(phase_core::cli::run(std::env::args_os()));
}
