fn main() {
    std::process::exit(jflow::cli::main());
}
