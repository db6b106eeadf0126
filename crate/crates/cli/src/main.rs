fn main() {
    std::process::exit(graphst_cli::run(std::env::args_os()));
}
