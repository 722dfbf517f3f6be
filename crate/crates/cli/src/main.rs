fn main() {
    std::process::exit(pqcascade_cli::run(std::env::args_os()));
}
