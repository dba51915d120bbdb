fn main() {
    std::process::exit(dialectid::cli::run(std::env::args_os()));
}
