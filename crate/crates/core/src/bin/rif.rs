fn main() {
    std::process::exit(rif_core::cli::main());
}
