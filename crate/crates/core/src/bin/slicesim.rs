fn main() {
    std::process::exit(slicesim::cli::main_with_args(std::env::args_os()));
}
