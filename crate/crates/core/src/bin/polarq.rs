fn main() {
    std::process::exit(polarq::cli::main_with(std::env::args_os()));
}
