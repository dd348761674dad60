fn main() {
    std::process::exit(dropreg_cli::run(std::env::args_os()));
}
