fn main() {
    std::process::exit(smm_core::cli::run(std::env::args_os()));
}
