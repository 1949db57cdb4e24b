fn main() {
    std::process::exit(sdre_cli::main_with_args(std::env::args_os()));
}
