fn main() {
    std::process::exit(skillrank_cli::run(std::env::args_os()));
}
