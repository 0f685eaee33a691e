fn main() {
    std::process::exit(etcon::cli::main_entry());
}
