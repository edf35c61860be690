fn main() {
    std::process::exit(kgplan::cli::main_with(std::env::args_os()));
}
