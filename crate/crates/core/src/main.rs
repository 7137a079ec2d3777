fn main() {
    std::process::exit(lowswing::cli::run(std::env::args_os()));
}
