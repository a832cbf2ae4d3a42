fn main() {
    std::process::exit(rdl_lab::cli::run(std::env::args_os()));
}
