fn main() {
    std::process::exit(epic_core::cli::run(std::env::args_os()));
}
