fn main() {
    std::process::exit(cap_reid::cli::cli_main(std::env::args_os()));
}
