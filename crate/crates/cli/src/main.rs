fn main() {
    std::process::exit(origami_cli::cli::run(std::env::args_os()));
}
