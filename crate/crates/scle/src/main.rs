fn main() {
    std::process::exit(scle::cli::main_with(std::env::args_os()));
}
