fn main() {
    std::process::exit(mcloc_cli::run(std::env::args_os()));
}
