fn main() {
    std::process::exit(gradnorm_ood::cli::main_with_args(std::env::args_os()));
}
