fn main() {
    std::process::exit(transducer_cli::run(std::env::args_os()));
}
