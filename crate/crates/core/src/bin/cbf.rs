fn main() {
    std::process::exit(cbf_core::cli::run(std::env::args_os()));
}
