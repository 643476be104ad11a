fn main() {
    std::process::exit(linklab::cli::run(std::env::args_os()));
}
