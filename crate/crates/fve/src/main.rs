fn main() {
    std::process::exit(fve::cli_main());
}
