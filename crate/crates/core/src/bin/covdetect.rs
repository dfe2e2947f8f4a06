fn main() {
    std::process::exit(covdetect::cli::main_with_args(std::env::args_os()));
}
