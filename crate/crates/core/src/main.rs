fn main() {
    std::process::exit(crowdroute::cli::run(std::env::args_os()));
}
