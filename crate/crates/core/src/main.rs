fn main() {
    std::process::exit(etacurv::cli::run(std::env::args_os()));
}
