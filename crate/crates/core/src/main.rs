fn main() {
    std::process::exit(spi_core::cli::main_with_args(std::env::args_os()));
}
