fn main() {
    std::process::exit(seqchart_cli::cli::run(std::env::args_os()));
}
