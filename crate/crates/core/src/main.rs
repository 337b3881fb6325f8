fn main() {
    std::process::exit(percdetect::app::main_with_args(std::env::args_os()));
}
