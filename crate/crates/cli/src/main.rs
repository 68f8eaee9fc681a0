fn main() {
    std::process::exit(stentrecon_cli::main_with_args(std::env::args_os()));
}
