fn main() {
    std::process::exit(anatomy_guide::cli::run(std::env::args_os()));
}
