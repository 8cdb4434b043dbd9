fn main() {
    std::process::exit(hte_guard::cli::main_with_args(std::env::args_os()));
}
