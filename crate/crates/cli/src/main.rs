fn main() {
    std::process::exit(carp_cli::run(std::env::args_os()));
}
