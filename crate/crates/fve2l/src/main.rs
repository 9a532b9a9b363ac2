fn main() {
    std::process::exit(fve2l::cli::main_with_args(std::env::args_os().collect()));
}
