fn main() {
    std::process::exit(abexrat::cli::run_command(std::env::args_os()));
}
