fn main() {
    std::process::exit(moodloop::cli::main_with(std::env::args_os()));
}
