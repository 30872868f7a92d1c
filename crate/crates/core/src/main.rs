fn main() {
    std::process::exit(popchain::cli::main_with_args(std::env::args_os()));
}
