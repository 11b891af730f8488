fn main() {
    std::process::exit(qnet_cli::cli_main(std::env::args_os()));
}
