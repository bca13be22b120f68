fn main() {
    std::process::exit(tensorlift_core::cli::run(std::env::args_os()));
}
