fn main() {
    std::process::exit(wdl::cli::run(std::env::args_os()));
}
