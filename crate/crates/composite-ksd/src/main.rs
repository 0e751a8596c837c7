fn main() {
    std::process::exit(composite_ksd::cli::main());
}
