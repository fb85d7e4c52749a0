fn main() {
    std::process::exit(layermig::cli::main_with_args(std::env::args_os()));
}
