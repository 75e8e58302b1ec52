fn main() {
    std::process::exit(fieldscout::cli::main());
}
