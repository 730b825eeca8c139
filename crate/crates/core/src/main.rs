fn main() {
    std::process::exit(ben_core::cli::run(std::env::args_os()));
}
