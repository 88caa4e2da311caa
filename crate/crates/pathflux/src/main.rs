fn main() {
    std::process::exit(pathflux::cli::main_with_args(std::env::args_os()));
}
