fn main() {
    std::process::exit(graph_transformer::cli::run_from(std::env::args_os()));
}
