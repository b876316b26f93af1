fn main() {
    std::process::exit(partial_dp_cli::run(std::env::args_os()));
}
