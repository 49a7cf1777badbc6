fn main() {
    std::process::exit(whyplan_cli::cli::run(std::env::args_os()));
}
