fn main() {
    std::process::exit(hsi_unmix::cli::main_with_args(std::env::args_os()));
}
