fn main() {
    std::process::exit(ipg::cli::run(std::env::args_os()));
}
