fn main() {
    std::process::exit(thoughtmem::cli::run(std::env::args_os()));
}
