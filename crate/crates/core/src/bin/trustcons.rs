fn main() {
    std::process::exit(trustcons::cli::run(std::env::args_os()));
}
