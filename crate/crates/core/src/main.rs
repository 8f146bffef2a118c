fn main() {
    std::process::exit(ninn_core::cli::main_with_args(std::env::args_os()));
}
