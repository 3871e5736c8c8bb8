fn main() {
    std::process::exit(psfa::cli::main_with_args(std::env::args_os()));
}
