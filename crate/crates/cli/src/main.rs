fn main() {
    std::process::exit(casebench_cli::run(std::env::args_os()));
}
