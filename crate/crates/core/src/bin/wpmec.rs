fn main() {
    std::process::exit(wpmec::cli::run(std::env::args_os()));
}
