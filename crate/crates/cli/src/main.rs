fn main() {
    std::process::exit(oamncc_cli::main_with(std::env::args_os()));
}
