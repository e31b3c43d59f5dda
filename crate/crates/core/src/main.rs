fn main() {
    std::process::exit(memcam::cli::main_with_args(std::env::args_os()));
}
