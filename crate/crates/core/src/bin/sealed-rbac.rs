fn main() {
    std::process::exit(sealed_rbac::cli::main());
}
