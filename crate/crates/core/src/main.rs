fn main() {
    std::process::exit(lankit::cli::run(std::env::args_os()));
}
