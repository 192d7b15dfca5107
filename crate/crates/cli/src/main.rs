fn main() {
    std::process::exit(gibbs_cli::cli::main_with_args(std::env::args_os()));
}
