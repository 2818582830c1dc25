fn main() {
    std::process::exit(mom_cli::run(std::env::args_os()));
}
