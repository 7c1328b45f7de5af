fn main() {
    std::process::exit(labelsmith::cli::run(std::env::args_os()));
}
