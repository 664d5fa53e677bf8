fn main() {
    std::process::exit(roixai_cli::run(std::env::args_os()));
}
