fn main() {
    std::process::exit(conceptaudit::cli::run(std::env::args_os()));
}
