fn main() {
    std::process::exit(lecnce::cli::run(std::env::args_os()));
}
