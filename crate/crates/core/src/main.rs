fn main() {
    std::process::exit(damphase::cli::main_with_args(std::env::args_os()));
}
