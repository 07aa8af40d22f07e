fn main() {
    std::process::exit(angelesco::cli::main_with_args(std::env::args_os()));
}
