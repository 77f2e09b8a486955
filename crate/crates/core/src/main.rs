fn main() {
    std::process::exit(qrbm::cli::main_with_exit_code());
}
