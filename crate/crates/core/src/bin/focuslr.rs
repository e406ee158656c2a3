fn main() {
    std::process::exit(focuslr::cli::run_cli(std::env::args_os()));
}
