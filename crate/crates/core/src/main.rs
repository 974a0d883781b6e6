fn main() {
    std::process::exit(textgeom::cli::run(std::env::args_os().collect()));
}
