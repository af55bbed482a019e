fn main() {
    std::process::exit(cut_transfer::cli::main());
}
