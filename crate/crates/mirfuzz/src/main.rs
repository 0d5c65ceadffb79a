fn main() {
    std::process::exit(mirfuzz::cli::main_with_args(std::env::args_os()));
}
