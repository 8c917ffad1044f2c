fn main() {
    std::process::exit(qmlbreaks::harness::cli_main(std::env::args_os()));
}
