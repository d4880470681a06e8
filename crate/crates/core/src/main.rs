fn main() {
    std::process::exit(vi_spectral::cli::main());
}
