fn main() {
    std::process::exit(proxyprobe::cli::main_with_args(std::env::args_os()));
}
