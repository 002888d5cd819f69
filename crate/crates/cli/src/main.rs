fn main() {
    std::process::exit(brwre_cli::run_command(std::env::args_os()));
}
