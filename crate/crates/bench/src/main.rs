fn main() {
    std::process::exit(gradraker_bench::cli::run(std::env::args_os()));
}
