fn main() {
    std::process::exit(score_recon::cli::run(std::env::args_os()));
}
