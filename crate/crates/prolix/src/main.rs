fn main() {
    std::process::exit(prolix::cli::main());
}
