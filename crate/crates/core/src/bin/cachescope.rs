fn main() {
    std::process::exit(cachescope::cli::run(std::env::args_os()));
}
