fn main() {
    std::process::exit(rnnt_cli::run(std::env::args_os().collect()));
}
