fn main() {
    std::process::exit(evdetect::cli::run());
}
