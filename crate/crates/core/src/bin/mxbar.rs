fn main() {
    std::process::exit(memxbar::cli::run());
}
