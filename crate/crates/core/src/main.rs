fn main() {
    std::process::exit(ctlss::cli::run(std::env::args_os()))
}
