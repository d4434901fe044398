fn main() {
    std::process::exit(lca_lab::cli::main_with_args(std::env::args_os()));
}
