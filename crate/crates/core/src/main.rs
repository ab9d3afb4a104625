fn main() {
    std::process::exit(spin_transfer::cli::run(std::env::args_os()));
}
