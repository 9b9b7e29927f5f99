fn main() {
    std::process::exit(darcy_uq_cli::main_with_args(std::env::args_os()));
}
