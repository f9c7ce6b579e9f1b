fn main() {
    std::process::exit(fedspeech::cli::main_with_args(std::env::args_os()));
}
