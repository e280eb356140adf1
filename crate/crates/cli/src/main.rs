fn main() {
    std::process::exit(pca_transfer_cli::run(std::env::args_os()));
}
