fn main() {
    std::process::exit(adgap::cli::main_with_args(std::env::args_os()));
}
