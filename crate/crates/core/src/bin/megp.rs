fn main() {
    std::process::exit(megp::cli::run());
}
