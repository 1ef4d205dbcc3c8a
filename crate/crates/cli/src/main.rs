fn main() {
    std::process::exit(onconet_cli::run(std::env::args_os()));
}
