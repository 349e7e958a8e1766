fn main() {
    std::process::exit(otr::cli::run(std::env::args_os()));
}
