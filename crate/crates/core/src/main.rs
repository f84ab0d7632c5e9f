fn main() {
    std::process::exit(hbac::cli::run(std::env::args_os()));
}
