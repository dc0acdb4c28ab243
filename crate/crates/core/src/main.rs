fn main() {
    std::process::exit(spatial_interaction::cli::main_with_args(std::env::args_os()));
}
