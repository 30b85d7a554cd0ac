fn main() {
    std::process::exit(afe_cli::run(std::env::args_os()));
}
