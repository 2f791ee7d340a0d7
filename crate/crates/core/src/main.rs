fn main() {
    std::process::exit(narrative_arc::cli::run(std::env::args_os()));
}
