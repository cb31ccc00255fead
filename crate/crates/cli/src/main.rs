fn main() {
    std::process::exit(mlgamp_cli::main_with(std::env::args_os()));
}
