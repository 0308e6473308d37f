fn main() {
    std::process::exit(progression_mtl::cli::run(std::env::args_os()));
}
