fn main() {
    std::process::exit(nucleo_ids::cli::run(std::env::args_os()));
}
