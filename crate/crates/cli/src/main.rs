fn main() {
    std::process::exit(epsim_cli::run_from(std::env::args_os()));
}
