fn main() {
    std::process::exit(dualdiv::cli::run(std::env::args_os()));
}
