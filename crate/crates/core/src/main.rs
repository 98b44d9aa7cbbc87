fn main() {
    std::process::exit(metasurface::cli::run());
}
