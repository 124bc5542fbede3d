fn main() {
    std::process::exit(seqmer::cli::run(std::env::args_os()));
}
