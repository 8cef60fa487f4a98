fn main() {
    std::process::exit(optlearn::cli::main_with_args(std::env::args_os()));
}
