fn main() {
    std::process::exit(ukf_core::harness::cli::cli_main(std::env::args_os()));
}
