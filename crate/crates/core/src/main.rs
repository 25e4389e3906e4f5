fn main() {
    std::process::exit(jet::cli::main_with_args(std::env::args_os()));
}
