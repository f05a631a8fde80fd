fn main() {
    std::process::exit(ordinal_transport_cli::app::main_with_args(std::env::args_os()));
}
