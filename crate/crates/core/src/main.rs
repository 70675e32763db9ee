fn main() {
    std::process::exit(almost_mathieu::cli::main_with_args(std::env::args_os()));
}
