fn main() {
    std::process::exit(cloudray::cli::run(std::env::args_os()));
}
