fn main() {
    std::process::exit(cliff_geom::io::cli::run(std::env::args_os()));
}
