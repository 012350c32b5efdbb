fn main() {
    std::process::exit(superres::cli::run(std::env::args_os()));
}
