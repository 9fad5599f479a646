fn main() {
    std::process::exit(cfbalance::cli::run());
}
