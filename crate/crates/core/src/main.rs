fn main() {
    std::process::exit(ravkit::cli::run(std::env::args_os()));
}
