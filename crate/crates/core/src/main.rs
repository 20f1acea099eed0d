fn main() {
    let argv: Vec<String> = std::env::args().collect();
    std::process::exit(epr_core::cli::run_cli(&argv));
}
