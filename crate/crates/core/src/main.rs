fn main() {
    std::process::exit(latentid::cli::main_with(std::env::args_os()));
}
