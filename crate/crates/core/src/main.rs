fn main() {
    std::process::exit(feshrg::cli::main_with_args(std::env::args_os()));
}
