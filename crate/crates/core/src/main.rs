fn main() {
    std::process::exit(c2nlos::io::cli::run(std::env::args_os()));
}
