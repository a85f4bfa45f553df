fn main() {
    std::process::exit(pot_cli::run(std::env::args_os()));
}
