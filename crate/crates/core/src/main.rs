fn main() {
    std::process::exit(chebcon::cli::run_from(std::env::args_os()));
}
