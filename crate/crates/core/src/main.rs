fn main() {
    std::process::exit(twoscale_fem::cli::main_with_args(
        std::env::args().skip(1).collect(),
    ));
}
