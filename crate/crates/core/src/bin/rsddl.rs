fn main() {
    std::process::exit(rsddl::cli::run(std::env::args_os()));
}
