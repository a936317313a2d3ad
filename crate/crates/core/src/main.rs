fn main() {
    std::process::exit(transbie::cli::main_from_args(std::env::args_os()));
}
