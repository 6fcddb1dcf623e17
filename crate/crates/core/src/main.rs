fn main() {
    std::process::exit(merton_core::cli::main_with_args(std::env::args_os()));
}
