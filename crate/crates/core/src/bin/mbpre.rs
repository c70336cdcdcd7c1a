fn main() {
    std::process::exit(mbpre::cli::main());
}
