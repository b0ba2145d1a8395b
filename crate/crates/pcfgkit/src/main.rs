fn main() {
    std::process::exit(pcfgkit::cli::run());
}
