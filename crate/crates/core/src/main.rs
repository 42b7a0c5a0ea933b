fn main() {
    std::process::exit(textmoments::cli::main());
}
